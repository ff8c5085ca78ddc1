#include "dimerge/tensor.hpp"

#include <cstring>
#include <sstream>

#include "dimerge/error.hpp"

namespace dimerge {

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

TensorRecord::TensorRecord(std::string name, DType dtype, Shape shape, std::vector<std::byte> bytes)
    : name_(std::move(name)), dtype_(dtype), shape_(std::move(shape)) {
    for (auto d : shape_) {
        if (d < 0) {
            throw_error(ErrorCategory::shape, "shape.invalid", "tensor '" + name_ + "' has a negative dimension");
        }
    }
    const auto expected = static_cast<std::size_t>(shape_numel(shape_)) * dtype_size(dtype_);
    if (bytes.size() != expected) {
        throw_error(ErrorCategory::io, "io.malformed_payload",
                    "tensor '" + name_ + "' payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                        std::to_string(expected));
    }
    bytes_ = std::make_shared<const std::vector<std::byte>>(std::move(bytes));
}

TensorRecord TensorRecord::from_values(std::string name, DType dtype, Shape shape, std::span<const double> values) {
    if (static_cast<std::size_t>(shape_numel(shape)) != values.size()) {
        throw_error(ErrorCategory::shape, "shape.mismatch",
                    "tensor '" + name + "' has " + std::to_string(values.size()) + " values for shape " +
                        shape_to_string(shape));
    }
    return TensorRecord(std::move(name), dtype, std::move(shape), encode_values(values, dtype));
}

std::size_t TensorRecord::numel() const noexcept { return static_cast<std::size_t>(shape_numel(shape_)); }

std::span<const std::byte> TensorRecord::bytes() const noexcept {
    if (!bytes_) return {};
    return {bytes_->data(), bytes_->size()};
}

std::vector<double> TensorRecord::values() const { return decode_values(bytes(), dtype_); }

TensorRecord TensorRecord::renamed(std::string name) const {
    TensorRecord copy = *this;
    copy.name_ = std::move(name);
    return copy;
}

bool TensorRecord::bitwise_equal(const TensorRecord& other) const noexcept {
    if (name_ != other.name_ || dtype_ != other.dtype_ || shape_ != other.shape_) return false;
    const auto a = bytes();
    const auto b = other.bytes();
    return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size()) == 0);
}

std::string role_name(Role role) {
    switch (role) {
        case Role::base: return "base";
        case Role::multilingual: return "multilingual";
        case Role::anchor: return "anchor";
        case Role::merged: return "merged";
    }
    return "?";
}

const TensorRecord& Checkpoint::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) {
        throw_error(ErrorCategory::shape, "shape.missing_tensor", "checkpoint has no tensor '" + name + "'");
    }
    return it->second;
}

void Checkpoint::insert(TensorRecord record) {
    auto name = record.name();
    auto [it, inserted] = tensors.emplace(name, std::move(record));
    if (!inserted) {
        throw_error(ErrorCategory::io, "io.duplicate_tensor", "duplicate tensor name '" + name + "'");
    }
}

std::uint64_t Checkpoint::parameter_count() const {
    std::uint64_t total = 0;
    for (const auto& [name, rec] : tensors) total += rec.numel();
    return total;
}

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

void fnv_mix(std::uint64_t& h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
}

}  // namespace

std::uint64_t checkpoint_digest(const Checkpoint& ckpt) {
    std::uint64_t h = kFnvOffset;
    for (const auto& [name, rec] : ckpt.tensors) {
        fnv_mix(h, name.data(), name.size());
        const auto dt = dtype_name(rec.dtype());
        fnv_mix(h, dt.data(), dt.size());
        for (auto d : rec.shape()) fnv_mix(h, &d, sizeof(d));
        const auto bytes = rec.bytes();
        fnv_mix(h, bytes.data(), bytes.size());
    }
    return h;
}

}  // namespace dimerge
