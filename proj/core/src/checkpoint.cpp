#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "sprop/error.hpp"
#include "sprop/model.hpp"
#include "sprop/text.hpp"

namespace sprop {
namespace {

using json = nlohmann::json;

constexpr std::string_view kFormat = "sprop-checkpoint";

json config_to_json(const SPropConfig& c) {
  return {{"emotion_dims", c.emotion_dims},
          {"hidden", c.hidden},
          {"pos_vocab", c.pos_vocab},
          {"dep_vocab", c.dep_vocab},
          {"task", c.task == TaskKind::Continuous ? "continuous" : "discrete"},
          {"outputs", c.outputs},
          {"attn_hidden", c.attn_hidden},
          {"cont_head_hidden", c.cont_head_hidden},
          {"disc_head_hidden", c.disc_head_hidden},
          {"layers", c.layers},
          {"dropout", c.dropout},
          {"seed", c.seed},
          {"emotion_names", c.emotion_names},
          {"output_names", c.output_names}};
}

SPropConfig config_from_json(const json& j) {
  SPropConfig c;
  c.emotion_dims = j.at("emotion_dims").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.pos_vocab = j.at("pos_vocab").get<std::size_t>();
  c.dep_vocab = j.at("dep_vocab").get<std::size_t>();
  const auto task = j.at("task").get<std::string>();
  if (task != "continuous" && task != "discrete") throw CheckpointError("unknown task `" + task + "`");
  c.task = task == "continuous" ? TaskKind::Continuous : TaskKind::Discrete;
  c.outputs = j.at("outputs").get<std::size_t>();
  c.attn_hidden = j.at("attn_hidden").get<std::size_t>();
  c.cont_head_hidden = j.at("cont_head_hidden").get<std::size_t>();
  c.disc_head_hidden = j.at("disc_head_hidden").get<std::vector<std::size_t>>();
  c.layers = j.at("layers").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.emotion_names = j.at("emotion_names").get<std::vector<std::string>>();
  c.output_names = j.at("output_names").get<std::vector<std::string>>();
  return c;
}

void append_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  char bytes[8];
  std::memcpy(bytes, &bits, 8);
  out.append(bytes, 8);
}

double read_le(const char* p) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, p, 8);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  return std::bit_cast<double>(bits);
}

}  // namespace

std::string serialize_model(const SPropModel& model) {
  std::string payload;
  payload.reserve(model.parameter_count() * 8);
  json manifest = json::array();
  std::size_t offset = 0;
  for (const auto& p : model.parameters()) {
    manifest.push_back({{"name", p.name},
                        {"shape", {p.value.rows(), p.value.cols()}},
                        {"offset", offset},
                        {"count", p.value.size()}});
    for (const double v : p.value.data()) append_le(payload, v);
    offset += p.value.size();
  }
  json header = {{"format", kFormat},
                 {"version", kCheckpointVersion},
                 {"config", config_to_json(model.config())},
                 {"tensors", std::move(manifest)},
                 {"payload_bytes", payload.size()},
                 {"checksum", text::hex64(text::fnv1a64(payload))}};
  return header.dump() + "\n" + payload;
}

SPropModel deserialize_model(std::string_view bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string_view::npos) throw CheckpointError("checkpoint header is missing");
  json header;
  try {
    header = json::parse(bytes.substr(0, nl));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  try {
    if (header.at("format").get<std::string>() != kFormat) throw CheckpointError("not a sprop checkpoint");
    const auto version = header.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (this build reads version " +
                            std::to_string(kCheckpointVersion) + ")");
    }
    const auto payload = bytes.substr(nl + 1);
    const auto expected_bytes = header.at("payload_bytes").get<std::size_t>();
    if (payload.size() < expected_bytes) throw CheckpointError("checkpoint payload is truncated");
    if (payload.size() > expected_bytes) throw CheckpointError("checkpoint has trailing bytes after the payload");
    if (text::hex64(text::fnv1a64(payload)) != header.at("checksum").get<std::string>()) {
      throw CheckpointError("checkpoint checksum mismatch");
    }

    SPropModel model(config_from_json(header.at("config")));
    const auto& tensors = header.at("tensors");
    if (tensors.size() != model.parameters().size()) throw CheckpointError("checkpoint tensor manifest does not match config");
    std::size_t i = 0;
    for (auto& p : model.parameters()) {
      const auto& t = tensors.at(i++);
      const auto shape = t.at("shape").get<std::vector<std::size_t>>();
      const auto offset = t.at("offset").get<std::size_t>();
      const auto count = t.at("count").get<std::size_t>();
      if (t.at("name").get<std::string>() != p.name || shape.size() != 2 || shape[0] != p.value.rows() ||
          shape[1] != p.value.cols() || count != p.value.size()) {
        throw CheckpointError("checkpoint tensor `" + t.at("name").get<std::string>() + "` does not match the model layout");
      }
      if ((offset + count) * 8 > payload.size()) throw CheckpointError("checkpoint payload is truncated");
      auto data = p.value.data();
      for (std::size_t k = 0; k < count; ++k) data[k] = read_le(payload.data() + (offset + k) * 8);
    }
    return model;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const ModelError& e) {
    throw CheckpointError(std::string("invalid checkpoint config: ") + e.what());
  }
}

void save_model(const SPropModel& model, const std::string& path) {
  const auto bytes = serialize_model(model);
  const auto tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("failed writing checkpoint: " + path);
  }
  std::filesystem::rename(tmp, path);
}

SPropModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace sprop
