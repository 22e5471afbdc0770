#include "trace/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "trace/dataset_io.hpp"

namespace trace {
namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

template <class U>
void put_le(std::ostream& out, U v) {
  unsigned char b[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), sizeof(U));
}

template <class U>
U get_le(std::istream& in) {
  unsigned char b[sizeof(U)];
  in.read(reinterpret_cast<char*>(b), sizeof(U));
  require(in.good(), ErrorCategory::kFormat, "truncated checkpoint");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
  return v;
}

void put_tensor(std::ostream& out, const Tensor<float>& t) {
  for (float v : t.values()) put_le(out, std::bit_cast<std::uint32_t>(v));
}

Tensor<float> get_tensor(std::istream& in, std::size_t rows, std::size_t cols) {
  Tensor<float> t(rows, cols);
  for (auto& v : t.values()) v = std::bit_cast<float>(get_le<std::uint32_t>(in));
  return t;
}

}  // namespace

ojson arch_to_json(const ArchConfig& cfg) {
  ojson ctx = ojson::array();
  for (const auto& c : cfg.contexts) {
    ctx.push_back({{"kind", context_kind_name(c.kind)}, {"dim", c.dim}, {"vocab", c.vocab}, {"payload_dim", c.payload_dim}});
  }
  return ojson{{"blocks", cfg.blocks},
               {"base_channels", cfg.base_channels},
               {"channel_multipliers", cfg.channel_multipliers},
               {"kernel_size", cfg.kernel_size},
               {"step_embed_dim", cfg.step_embed_dim},
               {"length", cfg.length},
               {"lerp_residual", cfg.lerp_residual},
               {"contexts", ctx}};
}

ArchConfig arch_from_json(const json& j) {
  ArchConfig cfg;
  try {
    cfg.blocks = j.at("blocks").get<int>();
    cfg.base_channels = j.at("base_channels").get<int>();
    cfg.channel_multipliers = j.at("channel_multipliers").get<std::vector<int>>();
    cfg.kernel_size = j.at("kernel_size").get<int>();
    cfg.step_embed_dim = j.at("step_embed_dim").get<int>();
    cfg.length = j.at("length").get<int>();
    cfg.lerp_residual = j.value("lerp_residual", false);
    for (const auto& c : j.at("contexts")) {
      cfg.contexts.push_back({parse_context_kind(c.at("kind").get<std::string>()), c.at("dim").get<int>(),
                              c.at("vocab").get<int>(), c.at("payload_dim").get<int>()});
    }
  } catch (const json::exception& e) {
    fail(ErrorCategory::kFormat, std::string("architecture record: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  ojson tensors = ojson::array();
  auto list = [&](const char* group, std::size_t i, const Tensor<float>& t) {
    tensors.push_back({{"name", ckpt.params.name(i)}, {"group", group}, {"rows", t.rows()}, {"cols", t.cols()}});
  };
  for (std::size_t i = 0; i < ckpt.params.count(); ++i) list("param", i, ckpt.params.value(i));
  if (ckpt.adam) {
    require(ckpt.adam->m.size() == ckpt.params.count(), ErrorCategory::kState, "optimizer state size mismatch");
    for (std::size_t i = 0; i < ckpt.params.count(); ++i) list("adam_m", i, ckpt.adam->m[i]);
    for (std::size_t i = 0; i < ckpt.params.count(); ++i) list("adam_v", i, ckpt.adam->v[i]);
  }

  ojson header;
  header["format_version"] = kCheckpointVersion;
  header["arch"] = arch_to_json(ckpt.arch);
  header["channel_layout_version"] = kChannelLayoutVersion;
  header["channel_order"] = channel_order_names();
  header["schedule"] = {{"steps", ckpt.schedule.steps},
                        {"beta_start", ckpt.schedule.beta_start},
                        {"beta_end", ckpt.schedule.beta_end},
                        {"shape", "linear"}};
  header["training_step"] = ckpt.training_step;
  header["use_state"] = ckpt.use_state;
  header["adam_step"] = ckpt.adam ? ckpt.adam->step : 0;
  if (ckpt.coords) header["coord_stats"] = coord_stats_json(*ckpt.coords);
  header["extra"] = ckpt.extra;
  header["tensors"] = tensors;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorCategory::kIo, "cannot write " + tmp.string());
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (std::size_t i = 0; i < ckpt.params.count(); ++i) put_tensor(out, ckpt.params.value(i));
    if (ckpt.adam) {
      for (const auto& t : ckpt.adam->m) put_tensor(out, t);
      for (const auto& t : ckpt.adam->v) put_tensor(out, t);
    }
    require(out.good(), ErrorCategory::kIo, "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCategory::kIo, "cannot open " + path.string());
  char magic[8];
  in.read(magic, 8);
  require(in.good() && std::memcmp(magic, kCheckpointMagic, 8) == 0, ErrorCategory::kFormat,
          path.string() + " is not a checkpoint");
  const auto version = get_le<std::uint32_t>(in);
  require(version == kCheckpointVersion, ErrorCategory::kFormat,
          "unsupported checkpoint version " + std::to_string(version));
  const auto len = get_le<std::uint64_t>(in);
  require(len < (1ull << 30), ErrorCategory::kFormat, "implausible checkpoint header size");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  require(in.good(), ErrorCategory::kFormat, "truncated checkpoint header");

  json header;
  try {
    header = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCategory::kFormat, std::string("checkpoint header: ") + e.what());
  }
  Checkpoint ckpt;
  try {
    require(header.at("channel_layout_version").get<int>() == kChannelLayoutVersion &&
                header.at("channel_order").get<std::vector<std::string>>() == channel_order_names(),
            ErrorCategory::kFormat, "checkpoint uses a different condition channel layout");
    ckpt.arch = arch_from_json(header.at("arch"));
    const auto& s = header.at("schedule");
    ckpt.schedule = make_schedule(s.at("steps").get<int>(), s.at("beta_start").get<double>(),
                                  s.at("beta_end").get<double>());
    ckpt.training_step = header.at("training_step").get<long>();
    ckpt.use_state = header.at("use_state").get<bool>();
    if (header.contains("coord_stats")) ckpt.coords = coord_stats_from_json(header["coord_stats"]);
    ckpt.extra = header.value("extra", ojson::object());

    AdamState adam;
    adam.step = header.value("adam_step", 0L);
    for (const auto& t : header.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      const auto group = t.at("group").get<std::string>();
      auto value = get_tensor(in, t.at("rows").get<std::size_t>(), t.at("cols").get<std::size_t>());
      if (group == "param") {
        ckpt.params.add(name, std::move(value));
      } else if (group == "adam_m") {
        adam.m.push_back(std::move(value));
      } else if (group == "adam_v") {
        adam.v.push_back(std::move(value));
      } else {
        fail(ErrorCategory::kFormat, "unknown tensor group " + group);
      }
    }
    if (!adam.m.empty()) {
      require(adam.m.size() == ckpt.params.count() && adam.v.size() == ckpt.params.count(), ErrorCategory::kFormat,
              "optimizer state does not cover every parameter");
      ckpt.adam = std::move(adam);
    }
  } catch (const json::exception& e) {
    fail(ErrorCategory::kFormat, std::string("checkpoint header: ") + e.what());
  }

  Rng probe(0);
  const auto expected = init_params(ckpt.arch, probe);
  require(expected.names() == ckpt.params.names(), ErrorCategory::kFormat,
          "checkpoint tensors do not match its architecture");
  for (std::size_t i = 0; i < expected.count(); ++i) {
    require(expected.value(i).same_shape(ckpt.params.value(i)), ErrorCategory::kFormat,
            "tensor " + expected.name(i) + " has the wrong shape");
  }
  require(ckpt.params.all_finite(), ErrorCategory::kNumeric, "checkpoint holds non-finite parameters");
  return ckpt;
}

}  // namespace trace
