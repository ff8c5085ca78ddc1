#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dimerge/dtype.hpp"

namespace dimerge {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// One named weight tensor. The payload is immutable and shared between
/// copies, so passing records between checkpoints never copies bytes.
class TensorRecord {
public:
    TensorRecord() = default;

    /// Takes ownership of a raw little-endian payload; validates its size
    /// against `shape` and `dtype`.
    TensorRecord(std::string name, DType dtype, Shape shape, std::vector<std::byte> bytes);

    /// Encodes f64 values into `dtype` (round to nearest even).
    static TensorRecord from_values(std::string name, DType dtype, Shape shape, std::span<const double> values);

    const std::string& name() const noexcept { return name_; }
    DType dtype() const noexcept { return dtype_; }
    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t numel() const noexcept;
    std::span<const std::byte> bytes() const noexcept;

    /// Exact widening to f64; every supported dtype is representable.
    std::vector<double> values() const;

    TensorRecord renamed(std::string name) const;

    /// Same name, dtype, shape and payload bytes.
    bool bitwise_equal(const TensorRecord& other) const noexcept;

private:
    std::string name_;
    DType dtype_ = DType::f32;
    Shape shape_;
    std::shared_ptr<const std::vector<std::byte>> bytes_;
};

enum class Role { base, multilingual, anchor, merged };

std::string role_name(Role role);

/// Tensors keyed by name; iteration is lexicographic by name.
struct Checkpoint {
    std::map<std::string, TensorRecord> tensors;
    Role role = Role::base;
    std::string source_path;

    bool empty() const noexcept { return tensors.empty(); }
    std::size_t size() const noexcept { return tensors.size(); }
    bool contains(const std::string& name) const { return tensors.count(name) != 0; }
    const TensorRecord& at(const std::string& name) const;

    /// Inserts a record under its own name; throws on duplicates.
    void insert(TensorRecord record);

    std::uint64_t parameter_count() const;
};

/// FNV-1a over every tensor's name, dtype, shape and payload in name order.
std::uint64_t checkpoint_digest(const Checkpoint& ckpt);

}  // namespace dimerge
