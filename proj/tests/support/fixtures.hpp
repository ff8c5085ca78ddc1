#pragma once

// Shared test fixtures: a portable RNG, scratch directories and a tiny
// two-layer decoder checkpoint triple with an anchor-only vision tower.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "dimerge/tensor.hpp"

namespace dimerge::fixtures {

/// splitmix64 stream; identical on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

    /// Box-Muller.
    double normal(double sd = 1.0) {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    std::vector<double> normals(std::size_t n, double sd = 1.0) {
        std::vector<double> v(n);
        for (auto& x : v) x = normal(sd);
        return v;
    }

private:
    std::uint64_t state_;
};

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("dimerge-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline TensorRecord make_record(const std::string& name, const Shape& shape, const std::vector<double>& values,
                                DType dtype = DType::f32) {
    return TensorRecord::from_values(name, dtype, shape, values);
}

struct TripleCheckpoints {
    Checkpoint base;
    Checkpoint ml;
    Checkpoint anchor;
};

struct FixtureOptions {
    std::uint64_t seed = 7;
    DType dtype = DType::f32;
    int layers = 2;
    std::int64_t hidden = 8;
    std::int64_t intermediate = 16;
    std::int64_t vocab = 32;
    /// Scale of the multilingual / multimodal residuals; 0 gives identical models.
    double ml_scale = 0.05;
    double mm_scale = 0.02;
    /// Prefix the anchor's language model keys as a LLaVA-style checkpoint does.
    bool llava_keys = false;
};

/// Backbone keys of the synthetic decoder with their shapes.
inline std::vector<std::pair<std::string, Shape>> backbone_layout(const FixtureOptions& o) {
    std::vector<std::pair<std::string, Shape>> keys;
    keys.push_back({"model.embed_tokens.weight", {o.vocab, o.hidden}});
    for (int l = 0; l < o.layers; ++l) {
        const std::string p = "model.layers." + std::to_string(l) + ".";
        for (const char* proj : {"q_proj", "k_proj", "v_proj", "o_proj"}) {
            keys.push_back({p + "self_attn." + proj + ".weight", {o.hidden, o.hidden}});
        }
        keys.push_back({p + "self_attn.q_proj.bias", {o.hidden}});
        keys.push_back({p + "mlp.gate_proj.weight", {o.intermediate, o.hidden}});
        keys.push_back({p + "mlp.up_proj.weight", {o.intermediate, o.hidden}});
        keys.push_back({p + "mlp.down_proj.weight", {o.hidden, o.intermediate}});
        keys.push_back({p + "input_layernorm.weight", {o.hidden}});
        keys.push_back({p + "post_attention_layernorm.weight", {o.hidden}});
    }
    keys.push_back({"model.norm.weight", {o.hidden}});
    keys.push_back({"lm_head.weight", {o.vocab, o.hidden}});
    return keys;
}

inline std::vector<std::pair<std::string, Shape>> vision_layout() {
    return {{"vision_tower.patch_embed.weight", {4, 3, 2}},
            {"vision_tower.encoder.layers.0.fc.weight", {4, 4}},
            {"multi_modal_projector.linear_1.weight", {8, 4}},
            {"multi_modal_projector.linear_1.bias", {8}}};
}

/// Residuals get per-column scales so magnitude and direction deviations
/// vary across columns and between the two sources.
inline TripleCheckpoints make_fixture(const FixtureOptions& o = {}) {
    Rng rng(o.seed);
    TripleCheckpoints t;
    t.base.role = Role::base;
    t.ml.role = Role::multilingual;
    t.anchor.role = Role::anchor;
    for (const auto& [name, shape] : backbone_layout(o)) {
        const auto n = static_cast<std::size_t>(shape_numel(shape));
        const std::size_t cols = shape.size() == 2 ? static_cast<std::size_t>(shape[1]) : n;
        std::vector<double> col_ml(cols), col_mm(cols);
        for (std::size_t j = 0; j < cols; ++j) {
            col_ml[j] = o.ml_scale * rng.uniform(0.2, 2.0);
            col_mm[j] = o.mm_scale * rng.uniform(0.2, 2.0);
        }
        std::vector<double> b(n), m(n), v(n);
        for (std::size_t i = 0; i < n; ++i) {
            b[i] = rng.normal(0.5);
            m[i] = b[i] + col_ml[i % cols] * rng.normal();
            v[i] = b[i] + col_mm[i % cols] * rng.normal();
        }
        const std::string anchor_name = o.llava_keys ? "language_model." + name : name;
        t.base.insert(TensorRecord::from_values(name, o.dtype, shape, b));
        t.ml.insert(TensorRecord::from_values(name, o.dtype, shape, m));
        t.anchor.insert(TensorRecord::from_values(anchor_name, o.dtype, shape, v));
    }
    for (const auto& [name, shape] : vision_layout()) {
        t.anchor.insert(TensorRecord::from_values(name, o.dtype, shape,
                                                  rng.normals(static_cast<std::size_t>(shape_numel(shape)), 0.3)));
    }
    return t;
}

inline std::size_t backbone_tensor_count(const FixtureOptions& o = {}) { return backbone_layout(o).size(); }

}  // namespace dimerge::fixtures
