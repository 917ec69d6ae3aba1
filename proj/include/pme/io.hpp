#pragma once
#include <cstdint>
#include <optional>
#include <string>

#include "pme/gating.hpp"
#include "pme/product.hpp"

namespace pme {

/// Write-to-temp-then-rename; readers never see partial files.
void atomic_write_text(const std::string& path, const std::string& content);
void atomic_write_bytes(const std::string& path, const std::string& bytes);

std::uint64_t fnv1a(std::uint64_t seed, const void* data, std::size_t len);
std::uint64_t fnv1a(std::uint64_t seed, const std::string& s);

struct Checkpoint {
    std::uint32_t version = 0;
    std::uint64_t config_hash = 0;
    Signature sig;
    PointTable points;
    std::optional<GatingParams> gating;
};

void save_checkpoint(const std::string& path, const Signature& sig, const PointTable& points,
                     const GatingParams* gating, std::uint64_t config_hash);
/// Throws io_error on version mismatch or truncation. The caller checks
/// config_hash against its own expectation.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace pme
