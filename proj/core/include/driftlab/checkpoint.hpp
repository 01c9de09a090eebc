#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include <nlohmann/json.hpp>

#include "driftlab/dira_ss.hpp"
#include "driftlab/ewc.hpp"
#include "driftlab/network.hpp"

namespace driftlab {

inline constexpr int kCheckpointVersion = 1;

/// A source model (plain or Y-structured) with its optional EWC state.
///
/// For a YModel the fisher and anchor cover the adaptable parameters
/// (trunk + aux head); for a plain Network they cover every parameter.
struct Checkpoint {
  std::variant<Network, YModel> model;
  std::optional<FisherDiagonal> fisher;
  std::optional<AnchorParams> anchor;

  bool is_y_model() const noexcept { return std::holds_alternative<YModel>(model); }
  /// Layout the fisher and anchor blocks must match.
  ParamSet protected_params() const;
};

/// Little-endian IEEE-754 bits of `value` as 16 hex digits (least significant byte first).
std::string encode_f64_hex(double value);
/// Inverse of encode_f64_hex. Throws FormatError on malformed input.
double decode_f64_hex(std::string_view hex);

/// JSON envelope including a SHA-256 digest of everything else.
nlohmann::json checkpoint_to_json(const Checkpoint& ckpt);
/// Throws VersionError, IntegrityError or FormatError.
Checkpoint checkpoint_from_json(const nlohmann::json& j);

/// Throws IoError when the file cannot be written.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws IoError, TruncationError, FormatError, VersionError or IntegrityError.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace driftlab
