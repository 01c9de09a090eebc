#include "driftlab/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "driftlab/errors.hpp"

namespace driftlab {

using nlohmann::json;

namespace {

constexpr std::string_view kFormatName = "driftlab-checkpoint";

json layers_json(const std::vector<LayerSpec>& layers) {
  json out = json::array();
  for (const auto& l : layers) {
    out.push_back({{"in", l.in_dim}, {"out", l.out_dim}, {"activation", std::string(to_string(l.activation))}});
  }
  return out;
}

std::vector<LayerSpec> layers_from_json(const json& j) {
  std::vector<LayerSpec> layers;
  for (const auto& l : j) {
    layers.push_back({l.at("in").get<std::size_t>(), l.at("out").get<std::size_t>(),
                      parse_activation(l.at("activation").get<std::string>())});
  }
  return layers;
}

json hex_array(std::span<const double> values) {
  json out = json::array();
  for (double v : values) out.push_back(encode_f64_hex(v));
  return out;
}

void fill_from_hex(std::span<double> into, const json& arr, const std::string& where) {
  if (!arr.is_array() || arr.size() != into.size()) {
    throw FormatError(where + ": expected " + std::to_string(into.size()) + " values", 0);
  }
  for (std::size_t k = 0; k < into.size(); ++k) into[k] = decode_f64_hex(arr[k].get<std::string>());
}

json blocks_json(const ParamSet& params) {
  json blocks = json::array();
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    blocks.push_back({{"weights", hex_array(params.weights(l))}, {"bias", hex_array(params.bias(l))}});
  }
  return blocks;
}

ParamSet blocks_from_json(const json& blocks, std::vector<LayerShape> shapes, const std::string& where) {
  if (!blocks.is_array() || blocks.size() != shapes.size()) {
    throw FormatError(where + ": expected " + std::to_string(shapes.size()) + " parameter blocks", 0);
  }
  ParamSet params(std::move(shapes));
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    const std::string at = where + "[" + std::to_string(l) + "]";
    fill_from_hex(params.weights(l), blocks[l].at("weights"), at + ".weights");
    fill_from_hex(params.bias(l), blocks[l].at("bias"), at + ".bias");
  }
  return params;
}

std::string digest_of(const json& body) {
  const std::string text = body.dump();
  return sha256_hex(std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

}  // namespace

ParamSet Checkpoint::protected_params() const {
  if (const auto* y = std::get_if<YModel>(&model)) return y->adaptable_params();
  return std::get<Network>(model).params();
}

std::string encode_f64_hex(double value) {
  static constexpr char kDigits[] = "0123456789abcdef";
  const auto bits = std::bit_cast<std::uint64_t>(value);
  std::string out(16, '0');
  for (int i = 0; i < 8; ++i) {
    const auto byte = static_cast<unsigned>((bits >> (8 * i)) & 0xff);
    out[2 * i] = kDigits[byte >> 4];
    out[2 * i + 1] = kDigits[byte & 0xf];
  }
  return out;
}

double decode_f64_hex(std::string_view hex) {
  if (hex.size() != 16) throw FormatError("hex-encoded double must have 16 digits", 0);
  auto nibble = [](char c) -> unsigned {
    if (c >= '0' && c <= '9') return static_cast<unsigned>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<unsigned>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return static_cast<unsigned>(c - 'A' + 10);
    throw FormatError("invalid hex digit in encoded double", 0);
  };
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    const std::uint64_t byte = (nibble(hex[2 * i]) << 4) | nibble(hex[2 * i + 1]);
    bits |= byte << (8 * i);
  }
  return std::bit_cast<double>(bits);
}

json checkpoint_to_json(const Checkpoint& ckpt) {
  json body;
  body["format"] = kFormatName;
  body["format_version"] = kCheckpointVersion;
  if (const auto* y = std::get_if<YModel>(&ckpt.model)) {
    const Network base = y->main_path();
    body["kind"] = "y_model";
    body["architecture"] = {{"layers", layers_json(base.layers())}};
    body["seed"] = base.seed();
    body["split_k"] = y->split_k();
    body["params"] = blocks_json(base.params());
    body["aux_head"] = {{"layers", layers_json(y->aux_head().layers())},
                        {"seed", y->aux_head().seed()},
                        {"params", blocks_json(y->aux_head().params())}};
  } else {
    const auto& net = std::get<Network>(ckpt.model);
    body["kind"] = "network";
    body["architecture"] = {{"layers", layers_json(net.layers())}};
    body["seed"] = net.seed();
    body["params"] = blocks_json(net.params());
  }
  if (ckpt.fisher) {
    body["fisher"] = {{"sample_count", ckpt.fisher->sample_count},
                      {"source_fingerprint", ckpt.fisher->source_fingerprint},
                      {"blocks", blocks_json(ckpt.fisher->values)}};
  }
  if (ckpt.anchor) body["anchor"] = {{"blocks", blocks_json(ckpt.anchor->params())}};
  body["digest"] = digest_of(body);
  return body;
}

Checkpoint checkpoint_from_json(const json& j) {
  if (!j.is_object() || j.value("format", "") != kFormatName) {
    throw FormatError("not a driftlab checkpoint", 0);
  }
  const int version = j.value("format_version", -1);
  if (version != kCheckpointVersion) {
    throw VersionError("unsupported checkpoint format_version " + std::to_string(version) + " (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  json body = j;
  if (!body.contains("digest")) throw IntegrityError("checkpoint has no digest");
  const std::string stored = body["digest"].get<std::string>();
  body.erase("digest");
  if (digest_of(body) != stored) throw IntegrityError("checkpoint digest mismatch");

  try {
    const auto layers = layers_from_json(j.at("architecture").at("layers"));
    const auto seed = j.at("seed").get<std::uint64_t>();
    Network base(layers, blocks_from_json(j.at("params"), shapes_of(layers), "params"), seed);
    Checkpoint ckpt{base, std::nullopt, std::nullopt};
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "y_model") {
      const auto k = j.at("split_k").get<std::size_t>();
      if (k < 1 || k >= layers.size()) throw FormatError("split_k out of range", 0);
      const auto& aux = j.at("aux_head");
      const auto aux_layers = layers_from_json(aux.at("layers"));
      Network aux_head(aux_layers, blocks_from_json(aux.at("params"), shapes_of(aux_layers), "aux_head.params"),
                       aux.at("seed").get<std::uint64_t>());
      auto [trunk_params, main_params] = base.params().split(k);
      Network trunk({layers.begin(), layers.begin() + static_cast<std::ptrdiff_t>(k)}, std::move(trunk_params), seed);
      Network main_head({layers.begin() + static_cast<std::ptrdiff_t>(k), layers.end()}, std::move(main_params), seed);
      ckpt.model = YModel(std::move(trunk), std::move(main_head), std::move(aux_head));
    } else if (kind != "network") {
      throw FormatError("unknown checkpoint kind '" + kind + "'", 0);
    }
    const auto shapes = ckpt.protected_params().layers();
    if (j.contains("fisher")) {
      const auto& f = j["fisher"];
      ckpt.fisher = FisherDiagonal{blocks_from_json(f.at("blocks"), shapes, "fisher.blocks"),
                                   f.at("sample_count").get<std::size_t>(),
                                   f.at("source_fingerprint").get<std::string>()};
      ckpt.fisher->validate();
    }
    if (j.contains("anchor")) {
      ckpt.anchor = AnchorParams(blocks_from_json(j["anchor"].at("blocks"), shapes, "anchor.blocks"));
    }
    return ckpt;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed checkpoint: ") + e.what(), 0);
  } catch (const ShapeError& e) {
    throw FormatError(std::string("checkpoint architecture inconsistent: ") + e.what(), 0);
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string text = checkpoint_to_json(ckpt).dump(1) + "\n";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << text;
  if (!out) throw IoError("write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    if (e.byte >= text.size()) {
      throw TruncationError("checkpoint " + path.string() + " ends after " + std::to_string(text.size()) + " bytes");
    }
    throw FormatError(path.string() + ": invalid JSON", e.byte);
  }
  return checkpoint_from_json(j);
}

}  // namespace driftlab
