#include "msclip/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "msclip/errors.hpp"

namespace msclip {

namespace {

static_assert(sizeof(float) == 4, "float32 payloads");

constexpr char kMagic[4] = {'M', 'S', 'C', 'K'};
constexpr std::uint16_t kVersion = 1;

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw IoError("truncated checkpoint");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

nlohmann::ordered_json model_config_to_json(const ModelConfig& cfg) {
  nlohmann::ordered_json j;
  j["image_size"] = cfg.image_size;
  j["patch_size"] = cfg.patch_size;
  j["in_channels"] = cfg.in_channels;
  j["vision_dim"] = cfg.vision_dim;
  j["vision_depth"] = cfg.vision_depth;
  j["vision_heads"] = cfg.vision_heads;
  j["text_dim"] = cfg.text_dim;
  j["text_depth"] = cfg.text_depth;
  j["text_heads"] = cfg.text_heads;
  j["vocab_size"] = cfg.vocab_size;
  j["context_length"] = cfg.context_length;
  j["proj_dim"] = cfg.proj_dim;
  j["mlp_ratio"] = cfg.mlp_ratio;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  try {
    cfg.image_size = j.at("image_size").get<int>();
    cfg.patch_size = j.at("patch_size").get<int>();
    cfg.in_channels = j.at("in_channels").get<int>();
    cfg.vision_dim = j.at("vision_dim").get<int>();
    cfg.vision_depth = j.at("vision_depth").get<int>();
    cfg.vision_heads = j.at("vision_heads").get<int>();
    cfg.text_dim = j.at("text_dim").get<int>();
    cfg.text_depth = j.at("text_depth").get<int>();
    cfg.text_heads = j.at("text_heads").get<int>();
    cfg.vocab_size = j.at("vocab_size").get<int>();
    cfg.context_length = j.at("context_length").get<int>();
    cfg.proj_dim = j.at("proj_dim").get<int>();
    cfg.mlp_ratio = j.at("mlp_ratio").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfigError(std::string("model config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

void save_checkpoint(const std::string& path, const ModelParameters& params,
                     const CheckpointMeta& meta) {
  nlohmann::ordered_json header;
  header["model"] = model_config_to_json(params.config);
  header["bands"] = band_names(meta.bands);
  nlohmann::ordered_json stats = nlohmann::ordered_json::object();
  for (const auto& [band, bs] : meta.norm_stats.per_band) {
    stats[std::string(band_name(band))] = {bs.mean, bs.stddev};
  }
  header["norm_stats"] = stats;
  header["vocab"] = meta.vocab_tokens;
  const std::string header_text = header.dump();

  std::string out;
  out.append(kMagic, 4);
  put<std::uint16_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(header_text.size()));
  out += header_text;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& [name, tensor] : params.tensors) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(tensor.shape.size()));
    for (std::size_t d : tensor.shape) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    }
    for (double v : tensor.v) put<float>(out, static_cast<float>(v));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("short checkpoint write: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read checkpoint: " + path);
  std::string in((std::istreambuf_iterator<char>(f)),
                 std::istreambuf_iterator<char>());

  std::size_t pos = 0;
  if (in.size() < 4 || std::memcmp(in.data(), kMagic, 4) != 0) {
    throw IoError("not a model checkpoint: " + path);
  }
  pos = 4;
  const auto version = take<std::uint16_t>(in, pos);
  if (version != kVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = take<std::uint32_t>(in, pos);
  if (pos + header_len > in.size()) throw IoError("truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.substr(pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint header: ") + e.what());
  }
  pos += header_len;

  Checkpoint ckpt;
  ckpt.params.config = model_config_from_json(header.at("model"));
  try {
    for (const auto& n : header.at("bands")) {
      ckpt.meta.bands.push_back(band_from_name(n.get<std::string>()));
    }
    for (const auto& [key, val] : header.at("norm_stats").items()) {
      BandStats bs{val.at(0).get<double>(), val.at(1).get<double>()};
      ckpt.meta.norm_stats.per_band[band_from_name(key)] = bs;
    }
    ckpt.meta.vocab_tokens =
        header.at("vocab").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint metadata: ") + e.what());
  }

  const auto count = take<std::uint32_t>(in, pos);
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto name_len = take<std::uint16_t>(in, pos);
    if (pos + name_len > in.size()) throw IoError("truncated tensor name");
    std::string name = in.substr(pos, name_len);
    pos += name_len;
    const auto ndim = take<std::uint8_t>(in, pos);
    std::vector<std::size_t> shape;
    std::size_t numel = 1;
    for (std::uint8_t d = 0; d < ndim; ++d) {
      shape.push_back(take<std::uint32_t>(in, pos));
      numel *= shape.back();
    }
    nn::Tensor tensor;
    tensor.shape = shape;
    tensor.v.resize(numel);
    if (pos + numel * 4 > in.size()) throw IoError("truncated tensor payload");
    for (std::size_t i = 0; i < numel; ++i) {
      float fv;
      std::memcpy(&fv, in.data() + pos, 4);
      pos += 4;
      tensor.v[i] = static_cast<double>(fv);
    }
    ckpt.params.tensors[name] = std::move(tensor);
  }
  if (pos != in.size()) throw IoError("trailing bytes in checkpoint");
  return ckpt;
}

}  // namespace msclip
