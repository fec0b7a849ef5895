#include "fdt/model/checkpoint.hpp"

#include <cstring>
#include <map>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fdt/util/errors.hpp"

namespace fdt::model {

namespace {

constexpr char kMagic[4] = {'F', 'D', 'T', 'C'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("checkpoint file truncated");
  return v;
}

nlohmann::ordered_json meta_to_json(const CheckpointMeta& meta) {
  nlohmann::ordered_json j;
  j["model"] = {{"n_layers", meta.config.n_layers},
                {"n_heads", meta.config.n_heads},
                {"hidden", meta.config.hidden},
                {"dropout", meta.config.dropout},
                {"context_steps", meta.config.context_steps},
                {"action_count", meta.config.action_count},
                {"max_timestep", meta.config.max_timestep},
                {"lang_src_dim", meta.config.lang_src_dim},
                {"conv_channels", meta.config.conv_channels}};
  j["variant"] = meta.variant.to_string();
  j["feedback_at_inference"] = meta.variant.feedback_at_inference;
  j["level"] = meta.level;
  j["provider_hash"] = meta.provider_hash;
  j["gamma"] = meta.gamma;
  return j;
}

CheckpointMeta meta_from_json(const nlohmann::json& j) {
  CheckpointMeta meta;
  const auto& m = j.at("model");
  meta.config.n_layers = m.at("n_layers").get<int>();
  meta.config.n_heads = m.at("n_heads").get<int>();
  meta.config.hidden = m.at("hidden").get<int>();
  meta.config.dropout = m.at("dropout").get<double>();
  meta.config.context_steps = m.at("context_steps").get<int>();
  meta.config.action_count = m.at("action_count").get<int>();
  meta.config.max_timestep = m.at("max_timestep").get<int>();
  meta.config.lang_src_dim = m.at("lang_src_dim").get<int>();
  const auto ch = m.at("conv_channels").get<std::vector<int>>();
  if (ch.size() != 3) throw DataError("checkpoint conv_channels must have 3 entries");
  meta.config.conv_channels = {ch[0], ch[1], ch[2]};
  meta.variant = VariantSpec::from_string(j.at("variant").get<std::string>());
  meta.variant.feedback_at_inference = j.at("feedback_at_inference").get<bool>();
  meta.level = j.at("level").get<std::string>();
  meta.provider_hash = j.at("provider_hash").get<std::uint64_t>();
  meta.gamma = j.at("gamma").get<double>();
  return meta;
}

}  // namespace

void save_checkpoint(const Params<float>& params, const CheckpointMeta& meta,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write(kMagic, 4);
  write_pod(out, kVersion);
  const std::string meta_json = meta_to_json(meta).dump();
  write_pod(out, static_cast<std::uint32_t>(meta_json.size()));
  out.write(meta_json.data(), static_cast<std::streamsize>(meta_json.size()));

  std::uint64_t tensor_count = 0;
  const_cast<Params<float>&>(params).visit(
      [&tensor_count](const std::string&, auto&, bool) { ++tensor_count; });
  if (params.variant.use_feedback) ++tensor_count;  // placeholder buffer
  write_pod(out, tensor_count);

  auto write_tensor = [&out](const std::string& name, const auto& tensor) {
    write_pod(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(out, static_cast<std::uint32_t>(tensor.rows()));
    write_pod(out, static_cast<std::uint32_t>(tensor.cols()));
    out.write(reinterpret_cast<const char*>(tensor.data()),
              static_cast<std::streamsize>(sizeof(float) *
                                           static_cast<std::size_t>(tensor.size())));
  };
  const_cast<Params<float>&>(params).visit(
      [&write_tensor](const std::string& name, auto& tensor, bool) {
        write_tensor(name, tensor);
      });
  if (params.variant.use_feedback) {
    write_tensor("feedback_placeholder", params.feedback_placeholder);
  }
  if (!out) throw DataError("write failed for checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError("not a checkpoint file: " + path);
  }
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kVersion) {
    throw DataError("unsupported checkpoint version: " + std::to_string(version));
  }
  const auto meta_len = read_pod<std::uint32_t>(in);
  std::string meta_json(meta_len, '\0');
  in.read(meta_json.data(), static_cast<std::streamsize>(meta_len));
  if (!in) throw DataError("checkpoint file truncated");

  LoadedCheckpoint loaded;
  try {
    loaded.meta = meta_from_json(nlohmann::json::parse(meta_json));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint metadata: ") + e.what());
  }
  loaded.params = Params<float>::make(loaded.meta.config, loaded.meta.variant);

  const auto tensor_count = read_pod<std::uint64_t>(in);
  std::map<std::string, std::pair<std::uint32_t, std::uint32_t>> seen;
  std::map<std::string, std::vector<float>> data;
  for (std::uint64_t i = 0; i < tensor_count; ++i) {
    const auto name_len = read_pod<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    const auto rows = read_pod<std::uint32_t>(in);
    const auto cols = read_pod<std::uint32_t>(in);
    std::vector<float> values(static_cast<std::size_t>(rows) * cols);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(sizeof(float) * values.size()));
    if (!in) throw DataError("checkpoint file truncated");
    seen[name] = {rows, cols};
    data[name] = std::move(values);
  }

  auto restore = [&](const std::string& name, auto& tensor) {
    const auto it = data.find(name);
    if (it == data.end()) throw DataError("checkpoint missing tensor: " + name);
    const auto [rows, cols] = seen[name];
    if (rows != static_cast<std::uint32_t>(tensor.rows()) ||
        cols != static_cast<std::uint32_t>(tensor.cols())) {
      throw DataError("checkpoint tensor has wrong shape: " + name);
    }
    std::memcpy(tensor.data(), it->second.data(), sizeof(float) * it->second.size());
  };
  loaded.params.visit(
      [&restore](const std::string& name, auto& tensor, bool) { restore(name, tensor); });
  if (loaded.params.variant.use_feedback) {
    restore("feedback_placeholder", loaded.params.feedback_placeholder);
  }
  return loaded;
}

}  // namespace fdt::model
