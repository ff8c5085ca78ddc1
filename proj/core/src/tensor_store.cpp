#include "dimerge/tensor_store.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include <nlohmann/json.hpp>

#include "dimerge/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dimerge {
namespace {

[[noreturn]] void io_error(const std::string& cls, const std::string& msg) {
    throw_error(ErrorCategory::io, cls, msg);
}

std::vector<std::byte> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) io_error("io.missing_file", "cannot open '" + path.string() + "'");
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<std::byte> buf(size);
    if (size && !in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(size))) {
        io_error("io.read_failed", "failed reading '" + path.string() + "'");
    }
    return buf;
}

json parse_json_unique_keys(std::string_view text, const std::string& what) {
    std::set<std::string> seen;
    std::string duplicate;
    json::parser_callback_t cb = [&](int depth, json::parse_event_t event, json& parsed) {
        if (event == json::parse_event_t::key && depth == 1) {
            auto key = parsed.get<std::string>();
            if (!seen.insert(key).second && duplicate.empty()) duplicate = key;
        }
        return true;
    };
    json j;
    try {
        j = json::parse(text.begin(), text.end(), cb);
    } catch (const json::exception& e) {
        io_error("io.malformed_header", what + ": invalid JSON (" + e.what() + ")");
    }
    if (!duplicate.empty()) io_error("io.duplicate_tensor", what + ": duplicate tensor name '" + duplicate + "'");
    if (!j.is_object()) io_error("io.malformed_header", what + ": header is not a JSON object");
    return j;
}

std::vector<TensorRecord> read_safetensors(const fs::path& path) {
    const auto buf = read_file(path);
    const std::string what = "'" + path.string() + "'";
    if (buf.size() < 8) io_error("io.malformed_header", what + ": file shorter than the 8-byte header length");
    std::uint64_t header_len = 0;
    std::memcpy(&header_len, buf.data(), 8);
    if (header_len > buf.size() - 8) io_error("io.malformed_header", what + ": header length exceeds file size");

    const std::string_view text(reinterpret_cast<const char*>(buf.data()) + 8, header_len);
    const json header = parse_json_unique_keys(text, what);
    const std::size_t data_begin = 8 + header_len;
    const std::size_t data_size = buf.size() - data_begin;

    std::vector<TensorRecord> out;
    for (const auto& [name, info] : header.items()) {
        if (name == "__metadata__") continue;
        try {
            const DType dtype = parse_dtype(info.at("dtype").get<std::string>());
            Shape shape = info.at("shape").get<Shape>();
            const auto offsets = info.at("data_offsets").get<std::vector<std::uint64_t>>();
            if (offsets.size() != 2 || offsets[0] > offsets[1] || offsets[1] > data_size) {
                io_error("io.malformed_header", what + ": bad data_offsets for '" + name + "'");
            }
            for (auto d : shape) {
                if (d < 0) io_error("io.malformed_header", what + ": negative dimension in '" + name + "'");
            }
            const auto* first = buf.data() + data_begin + offsets[0];
            out.emplace_back(name, dtype, std::move(shape),
                             std::vector<std::byte>(first, first + (offsets[1] - offsets[0])));
        } catch (const json::exception& e) {
            io_error("io.malformed_header", what + ": bad entry for '" + name + "' (" + e.what() + ")");
        }
    }
    return out;
}

void write_safetensors(const fs::path& path, const std::vector<const TensorRecord*>& records) {
    json header = json::object();
    header["__metadata__"] = {{"format", "pt"}};
    std::uint64_t offset = 0;
    for (const auto* rec : records) {
        const auto n = rec->bytes().size();
        header[rec->name()] = {{"dtype", dtype_name(rec->dtype())},
                               {"shape", rec->shape()},
                               {"data_offsets", {offset, offset + n}}};
        offset += n;
    }
    std::string text = header.dump();
    text.append((8 - text.size() % 8) % 8, ' ');

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) io_error("io.write_failed", "cannot write '" + path.string() + "'");
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto* rec : records) {
        const auto bytes = rec->bytes();
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    out.flush();
    if (!out) io_error("io.write_failed", "failed writing '" + path.string() + "'");
}

Checkpoint load_index(const fs::path& dir, const fs::path& index_path, Role role) {
    const auto raw = read_file(index_path);
    const std::string_view text(reinterpret_cast<const char*>(raw.data()), raw.size());
    json index;
    try {
        index = json::parse(text);
    } catch (const json::exception& e) {
        io_error("io.malformed_index", "'" + index_path.string() + "': invalid JSON (" + e.what() + ")");
    }
    if (!index.is_object() || !index.contains("weight_map") || !index["weight_map"].is_object()) {
        io_error("io.malformed_index", "'" + index_path.string() + "': missing weight_map");
    }

    std::map<std::string, std::vector<std::string>> by_shard;
    for (const auto& [name, shard] : index["weight_map"].items()) {
        if (!shard.is_string()) io_error("io.malformed_index", "weight_map entry for '" + name + "' is not a string");
        by_shard[shard.get<std::string>()].push_back(name);
    }

    Checkpoint ckpt;
    ckpt.role = role;
    ckpt.source_path = dir.string();
    for (const auto& [shard, names] : by_shard) {
        const fs::path shard_path = dir / shard;
        if (!fs::exists(shard_path)) {
            io_error("io.missing_shard", "index references absent shard '" + shard + "'");
        }
        std::set<std::string> present;
        for (auto& rec : read_safetensors(shard_path)) {
            present.insert(rec.name());
            if (ckpt.contains(rec.name())) {
                io_error("io.duplicate_tensor", "tensor '" + rec.name() + "' appears in more than one shard");
            }
            ckpt.insert(std::move(rec));
        }
        for (const auto& name : names) {
            if (!present.count(name)) {
                io_error("io.shard_missing_tensor", "shard missing tensor '" + name + "' (shard '" + shard + "')");
            }
        }
    }
    return ckpt;
}

bool has_safetensors_extension(const fs::path& path) { return path.extension() == ".safetensors"; }

std::string shard_file_name(std::size_t i, std::size_t n) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "model-%05zu-of-%05zu.safetensors", i + 1, n);
    return buf;
}

}  // namespace

Checkpoint load_checkpoint(const fs::path& path, Role role) {
    std::error_code ec;
    if (!fs::exists(path, ec)) io_error("io.missing_file", "no such file or directory '" + path.string() + "'");

    if (fs::is_directory(path)) {
        if (fs::exists(path / kIndexFileName)) return load_index(path, path / kIndexFileName, role);
        if (!fs::exists(path / kSingleFileName)) {
            io_error("io.missing_file", "directory '" + path.string() + "' has neither " + kIndexFileName + " nor " +
                                            kSingleFileName);
        }
        auto ckpt = load_checkpoint(path / kSingleFileName, role);
        ckpt.source_path = path.string();
        return ckpt;
    }

    if (path.filename().string().ends_with(".index.json")) return load_index(path.parent_path(), path, role);

    Checkpoint ckpt;
    ckpt.role = role;
    ckpt.source_path = path.string();
    for (auto& rec : read_safetensors(path)) ckpt.insert(std::move(rec));
    return ckpt;
}

std::vector<fs::path> save_checkpoint(const Checkpoint& ckpt, const fs::path& path, std::uint64_t shard_limit) {
    if (shard_limit == 0) throw_error(ErrorCategory::config, "config.invalid_value", "shard limit must be positive");
    if (ckpt.empty()) throw_error(ErrorCategory::config, "config.invalid_value", "refusing to save an empty checkpoint");

    std::vector<std::vector<const TensorRecord*>> shards(1);
    std::uint64_t current = 0;
    for (const auto& [name, rec] : ckpt.tensors) {
        const auto n = rec.bytes().size();
        if (!shards.back().empty() && current + n > shard_limit) {
            shards.emplace_back();
            current = 0;
        }
        shards.back().push_back(&rec);
        current += n;
    }

    std::error_code ec;
    std::vector<fs::path> written;
    if (shards.size() == 1 && has_safetensors_extension(path)) {
        if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
        write_safetensors(path, shards.front());
        written.push_back(path);
        return written;
    }

    fs::create_directories(path, ec);
    if (!fs::is_directory(path)) io_error("io.write_failed", "cannot create directory '" + path.string() + "'");
    if (shards.size() == 1) {
        written.push_back(path / kSingleFileName);
        write_safetensors(written.back(), shards.front());
        return written;
    }

    json weight_map = json::object();
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < shards.size(); ++i) {
        const auto file = shard_file_name(i, shards.size());
        written.push_back(path / file);
        write_safetensors(written.back(), shards[i]);
        for (const auto* rec : shards[i]) {
            weight_map[rec->name()] = file;
            total += rec->bytes().size();
        }
    }
    const json index = {{"metadata", {{"total_size", total}}}, {"weight_map", weight_map}};
    written.push_back(path / kIndexFileName);
    std::ofstream out(written.back(), std::ios::trunc);
    out << index.dump(2) << '\n';
    if (!out) io_error("io.write_failed", "cannot write '" + written.back().string() + "'");
    return written;
}

Checkpoint remap_keys(const Checkpoint& ckpt, const std::vector<RemapRule>& rules) {
    Checkpoint out;
    out.role = ckpt.role;
    out.source_path = ckpt.source_path;
    std::map<std::string, std::string> origin;
    for (const auto& [name, rec] : ckpt.tensors) {
        std::string mapped = name;
        for (const auto& rule : rules) {
            if (name.starts_with(rule.match_prefix)) {
                mapped = rule.replacement_prefix + name.substr(rule.match_prefix.size());
                break;
            }
        }
        auto [it, inserted] = origin.emplace(mapped, name);
        if (!inserted) {
            throw_error(ErrorCategory::config, "config.remap_collision",
                        "keys '" + it->second + "' and '" + name + "' both remap to '" + mapped + "'");
        }
        out.tensors.emplace(mapped, rec.renamed(mapped));
    }
    return out;
}

std::string shape_policy_name(ShapePolicy policy) {
    return policy == ShapePolicy::strict ? "strict" : "anchor_overlap";
}

ShapePolicy parse_shape_policy(const std::string& name) {
    if (name == "strict") return ShapePolicy::strict;
    if (name == "anchor_overlap" || name == "anchor-overlap") return ShapePolicy::anchor_overlap;
    throw_error(ErrorCategory::config, "config.invalid_value", "unknown shape policy '" + name + "'");
}

std::vector<double> crop_values(const TensorRecord& rec, const Shape& block) {
    const Shape& full = rec.shape();
    if (block.size() != full.size()) {
        throw_error(ErrorCategory::shape, "shape.rank_mismatch", "crop block rank differs for '" + rec.name() + "'");
    }
    const auto values = rec.values();
    if (block == full) return values;

    // Row-major strides of the full tensor.
    const std::size_t rank = full.size();
    std::vector<std::size_t> stride(rank, 1);
    for (std::size_t d = rank; d-- > 1;) stride[d - 1] = stride[d] * static_cast<std::size_t>(full[d]);

    const auto total = static_cast<std::size_t>(shape_numel(block));
    std::vector<double> out;
    out.reserve(total);
    std::vector<std::int64_t> idx(rank, 0);
    for (std::size_t count = 0; count < total; ++count) {
        std::size_t flat = 0;
        for (std::size_t d = 0; d < rank; ++d) flat += static_cast<std::size_t>(idx[d]) * stride[d];
        out.push_back(values[flat]);
        for (std::size_t d = rank; d-- > 0;) {
            if (++idx[d] < block[d]) break;
            idx[d] = 0;
        }
    }
    return out;
}

Alignment align_triple(const Checkpoint& base, const Checkpoint& ml, const Checkpoint& anchor,
                       const ScopeFilter& scope, ShapePolicy shape_policy) {
    Alignment result;
    auto& report = result.report;

    std::set<std::string> keys;
    for (const auto* c : {&base, &ml, &anchor}) {
        for (const auto& [name, rec] : c->tensors) keys.insert(name);
    }

    for (const auto& name : keys) {
        const bool in_base = base.contains(name);
        const bool in_ml = ml.contains(name);
        const bool in_anchor = anchor.contains(name);

        if (in_anchor && !in_base && !in_ml) {
            report.anchor_only.push_back(name);
            report.passthrough.push_back(name);
            continue;
        }
        if (!(in_base && in_ml && in_anchor)) {
            MissingKey mk{name, {}};
            if (!in_base) mk.missing_from.push_back("base");
            if (!in_ml) mk.missing_from.push_back("multilingual");
            if (!in_anchor) mk.missing_from.push_back("anchor");
            report.missing.push_back(std::move(mk));
            if (in_anchor) report.passthrough.push_back(name);
            continue;
        }
        if (!scope.admits(name)) {
            report.out_of_scope.push_back(name);
            report.passthrough.push_back(name);
            continue;
        }

        const auto& b = base.at(name);
        const auto& m = ml.at(name);
        const auto& a = anchor.at(name);
        if (b.shape() == m.shape() && b.shape() == a.shape()) {
            result.triples.push_back({name, b, m, a, false});
            continue;
        }

        ShapeMismatch mm{name, b.shape(), m.shape(), a.shape(), {}};
        if (shape_policy == ShapePolicy::strict) {
            throw_error(ErrorCategory::shape, "shape.mismatch",
                        "shape mismatch for '" + name + "': base " + shape_to_string(b.shape()) + ", multilingual " +
                            shape_to_string(m.shape()) + ", anchor " + shape_to_string(a.shape()));
        }
        if (b.rank() != a.rank() || m.rank() != a.rank()) {
            throw_error(ErrorCategory::shape, "shape.rank_mismatch",
                        "rank mismatch for '" + name + "' cannot be resolved by overlap");
        }
        Shape block(a.rank());
        for (std::size_t d = 0; d < a.rank(); ++d) {
            block[d] = std::min({b.shape()[d], m.shape()[d], a.shape()[d]});
        }
        const auto crop = [&](const TensorRecord& rec) {
            const auto v = crop_values(rec, block);
            return TensorRecord::from_values(name, DType::f64, block, v);
        };
        mm.resolution = "aligned leading block " + shape_to_string(block) + "; remaining anchor entries passed through";
        report.shape_mismatches.push_back(std::move(mm));
        result.triples.push_back({name, crop(b), crop(m), crop(a), true});
    }
    return result;
}

std::string AlignmentReport::to_json() const {
    json j;
    j["anchor_only"] = anchor_only;
    j["out_of_scope"] = out_of_scope;
    j["passthrough"] = passthrough;
    j["missing"] = json::array();
    for (const auto& m : missing) j["missing"].push_back({{"name", m.name}, {"missing_from", m.missing_from}});
    j["shape_mismatches"] = json::array();
    for (const auto& s : shape_mismatches) {
        j["shape_mismatches"].push_back({{"name", s.name},
                                         {"base", s.base},
                                         {"multilingual", s.ml},
                                         {"anchor", s.anchor},
                                         {"resolution", s.resolution}});
    }
    return j.dump(2);
}

}  // namespace dimerge
