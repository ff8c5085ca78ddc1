#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <functional>
#include <set>

#include <nlohmann/json.hpp>

#include "dimerge/error.hpp"
#include "dimerge/tensor_store.hpp"
#include "fixtures.hpp"

using namespace dimerge;
using dimerge::fixtures::make_record;
using dimerge::fixtures::Rng;
using dimerge::fixtures::TempDir;
namespace fs = std::filesystem;

namespace {

void write_raw(const fs::path& path, const std::string& header, const std::vector<std::byte>& data = {}) {
    std::ofstream out(path, std::ios::binary);
    const std::uint64_t n = header.size();
    out.write(reinterpret_cast<const char*>(&n), 8);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

std::string error_class_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.error_class();
    }
    return "<no error>";
}

Checkpoint small_checkpoint() {
    Checkpoint c;
    c.insert(make_record("a", {2, 2}, {1, 2, 3, 4}));
    c.insert(make_record("b", {3}, {0.5, -0.25, 8}, DType::bf16));
    c.insert(make_record("c", {2, 3}, {1, 2, 3, 4, 5, 6}, DType::f16));
    return c;
}

void expect_same_tensors(const Checkpoint& a, const Checkpoint& b) {
    ASSERT_EQ(a.size(), b.size());
    auto ia = a.tensors.begin();
    auto ib = b.tensors.begin();
    for (; ia != a.tensors.end(); ++ia, ++ib) {
        EXPECT_EQ(ia->first, ib->first);
        EXPECT_TRUE(ia->second.bitwise_equal(ib->second)) << ia->first;
    }
}

}  // namespace

TEST(TensorStore, SingleFileWithOneTensor) {
    TempDir dir;
    Checkpoint c;
    c.insert(make_record("a", {2, 2}, {1, 2, 3, 4}));
    const auto written = save_checkpoint(c, dir / "one.safetensors");
    ASSERT_EQ(written.size(), 1u);
    const auto loaded = load_checkpoint(dir / "one.safetensors", Role::base);
    ASSERT_EQ(loaded.size(), 1u);
    EXPECT_EQ(loaded.at("a").shape(), (Shape{2, 2}));
    EXPECT_EQ(loaded.at("a").values(), (std::vector<double>{1, 2, 3, 4}));
}

TEST(TensorStore, IndexSpanningTwoShards) {
    TempDir dir;
    Checkpoint c;
    c.insert(make_record("a", {4}, {1, 2, 3, 4}));
    c.insert(make_record("b", {4}, {5, 6, 7, 8}));
    const auto written = save_checkpoint(c, dir / "ckpt", 16);
    EXPECT_EQ(written.size(), 3u);
    EXPECT_TRUE(fs::exists(dir / "ckpt" / kIndexFileName));
    const auto loaded = load_checkpoint(dir / "ckpt", Role::base);
    EXPECT_EQ(loaded.size(), 2u);
    expect_same_tensors(c, loaded);
}

TEST(TensorStore, ShardMissingTensorIsAnError) {
    TempDir dir;
    Checkpoint c;
    c.insert(make_record("b", {1}, {1}));
    save_checkpoint(c, dir / "shard1.safetensors");
    nlohmann::json index = {{"weight_map", {{"a", "shard1.safetensors"}}}};
    std::ofstream(dir / kIndexFileName) << index.dump();
    EXPECT_EQ(error_class_of([&] { load_checkpoint(dir.path(), Role::base); }), "io.shard_missing_tensor");
}

TEST(TensorStore, IndexReferencingAbsentShard) {
    TempDir dir;
    nlohmann::json index = {{"weight_map", {{"a", "nope.safetensors"}}}};
    std::ofstream(dir / kIndexFileName) << index.dump();
    EXPECT_EQ(error_class_of([&] { load_checkpoint(dir.path(), Role::base); }), "io.missing_shard");
}

TEST(TensorStore, DuplicateTensorAcrossShards) {
    TempDir dir;
    Checkpoint c;
    c.insert(make_record("a", {1}, {1}));
    save_checkpoint(c, dir / "s1.safetensors");
    save_checkpoint(c, dir / "s2.safetensors");
    nlohmann::json index = {{"weight_map", {{"a", "s1.safetensors"}, {"b", "s2.safetensors"}}}};
    std::ofstream(dir / kIndexFileName) << index.dump();
    EXPECT_EQ(error_class_of([&] { load_checkpoint(dir.path(), Role::base); }), "io.duplicate_tensor");
}

TEST(TensorStore, MalformedFiles) {
    TempDir dir;
    EXPECT_EQ(error_class_of([&] { load_checkpoint(dir / "absent.safetensors", Role::base); }), "io.missing_file");

    std::ofstream(dir / "empty.safetensors").close();
    EXPECT_EQ(error_class_of([&] { load_checkpoint(dir / "empty.safetensors", Role::base); }), "io.malformed_header");

    write_raw(dir / "json.safetensors", "{not json");
    EXPECT_EQ(error_class_of([&] { load_checkpoint(dir / "json.safetensors", Role::base); }), "io.malformed_header");

    write_raw(dir / "range.safetensors", R"({"a":{"dtype":"F32","shape":[2],"data_offsets":[0,8]}})",
              std::vector<std::byte>(4));
    EXPECT_EQ(error_class_of([&] { load_checkpoint(dir / "range.safetensors", Role::base); }), "io.malformed_header");

    write_raw(dir / "size.safetensors", R"({"a":{"dtype":"F32","shape":[3],"data_offsets":[0,8]}})",
              std::vector<std::byte>(8));
    EXPECT_EQ(error_class_of([&] { load_checkpoint(dir / "size.safetensors", Role::base); }), "io.malformed_payload");

    write_raw(dir / "dup.safetensors",
              R"({"a":{"dtype":"F32","shape":[1],"data_offsets":[0,4]},"a":{"dtype":"F32","shape":[1],"data_offsets":[0,4]}})",
              std::vector<std::byte>(4));
    EXPECT_EQ(error_class_of([&] { load_checkpoint(dir / "dup.safetensors", Role::base); }), "io.duplicate_tensor");

    write_raw(dir / "int.safetensors", R"({"a":{"dtype":"I64","shape":[1],"data_offsets":[0,8]}})",
              std::vector<std::byte>(8));
    EXPECT_EQ(error_class_of([&] { load_checkpoint(dir / "int.safetensors", Role::base); }), "io.unsupported_dtype");
}

TEST(TensorStore, ReadsForeignHeaderLayout) {
    // Metadata entry, unpadded header and out-of-order offsets as other writers produce them.
    TempDir dir;
    std::vector<std::byte> data(12);
    const float vals[3] = {1.5f, -2.0f, 4.0f};
    std::memcpy(data.data(), vals, 12);
    write_raw(dir / "x.safetensors",
              R"({"__metadata__":{"format":"pt"},"z":{"dtype":"F32","shape":[1],"data_offsets":[0,4]},)"
              R"("y":{"dtype":"F32","shape":[2],"data_offsets":[4,12]}})",
              data);
    const auto c = load_checkpoint(dir / "x.safetensors", Role::base);
    EXPECT_EQ(c.at("z").values(), (std::vector<double>{1.5}));
    EXPECT_EQ(c.at("y").values(), (std::vector<double>{-2.0, 4.0}));
    EXPECT_EQ(c.tensors.begin()->first, "y");
}

TEST(TensorStore, PackingRules) {
    TempDir dir;
    const auto c = small_checkpoint();
    EXPECT_EQ(save_checkpoint(c, dir / "big", 1 << 20).size(), 1u);
    EXPECT_FALSE(fs::exists(dir / "big" / kIndexFileName));
    EXPECT_TRUE(fs::exists(dir / "big" / kSingleFileName));

    Checkpoint mib;
    const std::vector<double> ones(1 << 18, 1.0);  // 1 MiB of f32
    for (const char* n : {"t0", "t1", "t2"}) mib.insert(make_record(n, {1 << 18}, ones));
    const auto files = save_checkpoint(mib, dir / "mib", 3 * (1 << 19));  // 1.5 MiB
    EXPECT_EQ(files.size(), 4u);  // 3 shards + index
    EXPECT_TRUE(fs::exists(dir / "mib" / kIndexFileName));
    expect_same_tensors(mib, load_checkpoint(dir / "mib", Role::base));

    // A tensor larger than the limit gets a shard of its own.
    EXPECT_EQ(save_checkpoint(mib, dir / "tiny", 16).size(), 4u);
}

TEST(TensorStore, SaveRejectsBadArguments) {
    TempDir dir;
    EXPECT_EQ(error_class_of([&] { save_checkpoint(small_checkpoint(), dir / "x", 0); }), "config.invalid_value");
    EXPECT_EQ(error_class_of([&] { save_checkpoint(Checkpoint{}, dir / "x"); }), "config.invalid_value");
    std::ofstream(dir / "file").close();
    EXPECT_EQ(error_class_of([&] { save_checkpoint(small_checkpoint(), dir / "file" / "sub.safetensors"); }),
              "io.write_failed");
}

TEST(TensorStore, RoundTripIsBitwiseForEveryDtypeAndLayout) {
    Rng rng(11);
    for (auto dt : {DType::f32, DType::f16, DType::bf16, DType::f64}) {
        Checkpoint c;
        for (int t = 0; t < 6; ++t) {
            const Shape shape = t % 2 ? Shape{5, 7} : Shape{13};
            c.insert(make_record("t" + std::to_string(t), shape,
                                 rng.normals(static_cast<std::size_t>(shape_numel(shape))), dt));
        }
        for (std::uint64_t limit : {std::uint64_t{1} << 20, std::uint64_t{64}}) {
            TempDir dir;
            save_checkpoint(c, dir / "rt", limit);
            const auto back = load_checkpoint(dir / "rt", Role::anchor);
            expect_same_tensors(c, back);
            EXPECT_EQ(checkpoint_digest(c), checkpoint_digest(back));
        }
    }
}

TEST(TensorStore, BFloat16PayloadIsByteIdentical) {
    TempDir dir;
    std::vector<std::byte> raw(8);
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = std::byte(0x11 * (i + 1));
    Checkpoint c;
    c.insert(TensorRecord("w", DType::bf16, {4}, raw));
    save_checkpoint(c, dir / "w.safetensors");
    const auto back = load_checkpoint(dir / "w.safetensors", Role::base);
    const auto bytes = back.at("w").bytes();
    EXPECT_TRUE(std::equal(bytes.begin(), bytes.end(), raw.begin(), raw.end()));
}

TEST(Remap, PrefixRewrite) {
    Checkpoint c;
    c.insert(make_record("language_model.model.layers.0.x", {1}, {1}));
    c.insert(make_record("vision_tower.w", {1}, {2}));
    const auto out = remap_keys(c, {{"language_model.model.", "model."}});
    EXPECT_TRUE(out.contains("model.layers.0.x"));
    EXPECT_TRUE(out.contains("vision_tower.w"));
    EXPECT_EQ(out.at("model.layers.0.x").name(), "model.layers.0.x");
}

TEST(Remap, EmptyRulesAreIdentity) {
    const auto c = small_checkpoint();
    expect_same_tensors(c, remap_keys(c, {}));
}

TEST(Remap, FirstMatchingRuleWins) {
    Checkpoint c;
    c.insert(make_record("a.b.c", {1}, {1}));
    const auto out = remap_keys(c, {{"a.b.", "x."}, {"a.", "y."}});
    EXPECT_TRUE(out.contains("x.c"));
}

TEST(Remap, CollisionIsAnError) {
    Checkpoint c;
    c.insert(make_record("language_model.model.w", {1}, {1}));
    c.insert(make_record("model.w", {1}, {2}));
    EXPECT_EQ(error_class_of([&] { remap_keys(c, {{"language_model.model.", "model."}}); }),
              "config.remap_collision");
}

TEST(Remap, AdversarialRuleListsNeverMergeKeys) {
    // Random prefix rules over a small alphabet: either a collision is reported
    // or every input key survives as a distinct output key.
    Rng rng(5);
    const std::string alphabet = "ab.";
    auto random_string = [&](std::size_t max_len) {
        std::string s;
        const std::size_t len = rng.index(max_len + 1);
        for (std::size_t i = 0; i < len; ++i) s += alphabet[rng.index(alphabet.size())];
        return s;
    };
    int collisions = 0;
    for (int trial = 0; trial < 500; ++trial) {
        Checkpoint c;
        for (int k = 0; k < 8; ++k) {
            auto name = random_string(5) + std::to_string(k % 3);
            if (!c.contains(name)) c.insert(make_record(name, {1}, {double(k)}));
        }
        std::vector<RemapRule> rules;
        for (int r = 0; r < 3; ++r) rules.push_back({random_string(3), random_string(3)});
        try {
            const auto out = remap_keys(c, rules);
            ASSERT_EQ(out.size(), c.size());
        } catch (const Error& e) {
            ASSERT_EQ(e.error_class(), "config.remap_collision");
            ++collisions;
        }
    }
    EXPECT_GT(collisions, 0);
}

namespace {

struct Trio {
    Checkpoint base, ml, anchor;
};

Trio identical_trio() {
    Trio t;
    for (auto* c : {&t.base, &t.ml, &t.anchor}) {
        c->insert(make_record("model.embed_tokens.weight", {4, 2}, {1, 2, 3, 4, 5, 6, 7, 8}));
        c->insert(make_record("model.norm.weight", {2}, {1, 1}));
    }
    return t;
}

}  // namespace

TEST(Align, IdenticalKeySets) {
    auto t = identical_trio();
    const auto a = align_triple(t.base, t.ml, t.anchor, ScopeFilter{});
    EXPECT_EQ(a.triples.size(), 2u);
    EXPECT_TRUE(a.report.shape_mismatches.empty());
    EXPECT_TRUE(a.report.passthrough.empty());
}

TEST(Align, AnchorOnlyKeysPassThrough) {
    auto t = identical_trio();
    t.anchor.insert(make_record("vision_tower.block0.w", {1}, {1}));
    const auto a = align_triple(t.base, t.ml, t.anchor, ScopeFilter{});
    EXPECT_EQ(a.triples.size(), 2u);
    EXPECT_EQ(a.report.anchor_only, std::vector<std::string>{"vision_tower.block0.w"});
    EXPECT_EQ(a.report.passthrough, std::vector<std::string>{"vision_tower.block0.w"});
}

TEST(Align, StrictPolicyAbortsOnMismatchNamingTheKey) {
    auto t = identical_trio();
    t.anchor.tensors.erase("model.embed_tokens.weight");
    t.anchor.insert(make_record("model.embed_tokens.weight", {5, 2}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}));
    try {
        align_triple(t.base, t.ml, t.anchor, ScopeFilter{}, ShapePolicy::strict);
        FAIL() << "expected a shape mismatch";
    } catch (const Error& e) {
        EXPECT_EQ(e.error_class(), "shape.mismatch");
        EXPECT_NE(std::string(e.what()).find("model.embed_tokens.weight"), std::string::npos);
    }
}

TEST(Align, OverlapPolicyAlignsLeadingBlock) {
    auto t = identical_trio();
    t.anchor.tensors.erase("model.embed_tokens.weight");
    t.anchor.insert(make_record("model.embed_tokens.weight", {5, 2}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}));
    const auto a = align_triple(t.base, t.ml, t.anchor, ScopeFilter{}, ShapePolicy::anchor_overlap);
    ASSERT_EQ(a.report.shape_mismatches.size(), 1u);
    const auto& embed = a.triples.front();
    EXPECT_TRUE(embed.cropped);
    EXPECT_EQ(embed.mm.shape(), (Shape{4, 2}));
    EXPECT_EQ(embed.mm.values(), (std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8}));
}

TEST(Align, OutOfScopeMismatchDoesNotAbort) {
    auto t = identical_trio();
    t.anchor.tensors.erase("model.embed_tokens.weight");
    t.anchor.insert(make_record("model.embed_tokens.weight", {5, 2}, std::vector<double>(10, 1.0)));
    ScopeFilter scope;
    scope.exclude_patterns = {"*embed_tokens*"};
    const auto a = align_triple(t.base, t.ml, t.anchor, scope);
    EXPECT_EQ(a.report.out_of_scope, std::vector<std::string>{"model.embed_tokens.weight"});
}

TEST(Align, CropTakesLeadingBlockOfMatrix) {
    const auto r = make_record("w", {3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    EXPECT_EQ(crop_values(r, {2, 2}), (std::vector<double>{1, 2, 4, 5}));
}

TEST(Align, EveryAnchorKeyIsAlignedOrPassedThrough) {
    Rng rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        Trio t;
        for (int k = 0; k < 12; ++k) {
            const auto name = "k" + std::to_string(k);
            const auto mask = rng.index(8);
            if (mask & 1) t.base.insert(make_record(name, {1}, {1}));
            if (mask & 2) t.ml.insert(make_record(name, {1}, {2}));
            if (mask & 4 || rng.uniform() < 0.5) t.anchor.insert(make_record(name, {1}, {3}));
        }
        ScopeFilter scope;
        scope.exclude_patterns = {"k1*"};
        const auto a = align_triple(t.base, t.ml, t.anchor, scope);
        std::set<std::string> covered(a.report.passthrough.begin(), a.report.passthrough.end());
        for (const auto& tr : a.triples) ASSERT_TRUE(covered.insert(tr.name).second) << tr.name;
        for (const auto& [name, rec] : t.anchor.tensors) ASSERT_TRUE(covered.count(name)) << name;
        ASSERT_EQ(covered.size(), t.anchor.size());
    }
}

TEST(Align, ReportSerializesAsJson) {
    auto t = identical_trio();
    t.anchor.insert(make_record("vision_tower.w", {1}, {1}));
    const auto j = nlohmann::json::parse(align_triple(t.base, t.ml, t.anchor, ScopeFilter{}).report.to_json());
    EXPECT_EQ(j["anchor_only"][0], "vision_tower.w");
    EXPECT_TRUE(j["shape_mismatches"].empty());
}
