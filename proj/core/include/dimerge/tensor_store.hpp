#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dimerge/scope.hpp"
#include "dimerge/tensor.hpp"

namespace dimerge {

// ---------------------------------------------------------------------------
// Safetensors I/O
//
// A file is an 8-byte little-endian header length N, N bytes of JSON mapping
// tensor name -> {"dtype", "shape", "data_offsets": [begin, end]}, then the
// data region. A sharded checkpoint is a directory holding the shards plus
// "model.safetensors.index.json" with a "weight_map" of name -> shard file.
// ---------------------------------------------------------------------------

inline constexpr const char* kIndexFileName = "model.safetensors.index.json";
inline constexpr const char* kSingleFileName = "model.safetensors";
inline constexpr std::uint64_t kDefaultShardLimit = 5ull << 30;

/// Loads a single .safetensors file, or a directory containing either an
/// index manifest or a lone model.safetensors. Payload bytes are kept verbatim.
Checkpoint load_checkpoint(const std::filesystem::path& path, Role role);

/// Writes `ckpt`, packing tensors in name order into shards whose data region
/// does not exceed `shard_limit` bytes (an oversized tensor gets its own shard).
/// A single shard goes to `path` itself when it ends in ".safetensors", else to
/// `path`/model.safetensors; several shards always go into directory `path`
/// together with the index manifest. Returns the files written.
std::vector<std::filesystem::path> save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path,
                                                   std::uint64_t shard_limit = kDefaultShardLimit);

// ---------------------------------------------------------------------------
// Key remapping
// ---------------------------------------------------------------------------

struct RemapRule {
    std::string match_prefix;
    std::string replacement_prefix;
};

/// The first rule whose prefix matches a key rewrites it; other keys are kept.
/// Throws config.remap_collision when two keys land on the same name.
Checkpoint remap_keys(const Checkpoint& ckpt, const std::vector<RemapRule>& rules);

// ---------------------------------------------------------------------------
// Alignment
// ---------------------------------------------------------------------------

enum class ShapePolicy { strict, anchor_overlap };

std::string shape_policy_name(ShapePolicy policy);
ShapePolicy parse_shape_policy(const std::string& name);

/// The same backbone parameter as seen by base, multilingual and multimodal
/// checkpoints. Under anchor_overlap the three records are cropped to their
/// common leading block, and `cropped` is set.
struct AlignedTriple {
    std::string name;
    TensorRecord base;
    TensorRecord ml;
    TensorRecord mm;
    bool cropped = false;
};

struct ShapeMismatch {
    std::string name;
    Shape base;
    Shape ml;
    Shape anchor;
    std::string resolution;
};

struct MissingKey {
    std::string name;
    std::vector<std::string> missing_from;
};

struct AlignmentReport {
    std::vector<std::string> anchor_only;
    std::vector<MissingKey> missing;
    std::vector<std::string> out_of_scope;
    std::vector<ShapeMismatch> shape_mismatches;
    /// Every anchor key that is not part of an aligned triple, in name order.
    std::vector<std::string> passthrough;

    std::string to_json() const;
};

struct Alignment {
    std::vector<AlignedTriple> triples;
    AlignmentReport report;
};

/// Pairs up the backbone tensors present in all three checkpoints and admitted
/// by `scope`. Strict policy aborts on any shape mismatch (shape.mismatch).
Alignment align_triple(const Checkpoint& base, const Checkpoint& ml, const Checkpoint& anchor,
                       const ScopeFilter& scope, ShapePolicy shape_policy = ShapePolicy::strict);

/// Leading block of a 1D or 2D tensor, as f64 values.
std::vector<double> crop_values(const TensorRecord& rec, const Shape& block);

}  // namespace dimerge
