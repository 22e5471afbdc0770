#include "trace/spdm_net.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace trace {
namespace {

std::string scale_name(const char* prefix, int scale) { return std::string(prefix) + std::to_string(scale + 1); }

Tensor<float> uniform_fan_in(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
  Tensor<float> t(rows, cols);
  const double bound = 1.0 / std::sqrt(double(fan_in));
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-bound, bound));
  return t;
}

void add_conv(ModelParams<float>& p, const std::string& name, int cin, int cout, int k, Rng& rng, bool bias = true) {
  p.add(name + ".w", uniform_fan_in(cout, std::size_t(cin) * k, std::size_t(cin) * k, rng));
  if (bias) p.add(name + ".b", Tensor<float>(cout, 1));
}

void add_linear(ModelParams<float>& p, const std::string& name, int in, int out, Rng& rng) {
  p.add(name + ".w", uniform_fan_in(out, in, in, rng));
  p.add(name + ".b", Tensor<float>(out, 1));
}

void add_norm(ModelParams<float>& p, const std::string& name, int c) {
  p.add(name + ".g", Tensor<float>(c, 1, 1.0f));
  p.add(name + ".b", Tensor<float>(c, 1));
}

void add_resblock(ModelParams<float>& p, const std::string& name, int cin, int cout, int k, int emb, Rng& rng) {
  add_conv(p, name + ".conv1", cin, cout, k, rng);
  add_norm(p, name + ".gn1", cout);
  add_linear(p, name + ".step", emb, cout, rng);
  add_conv(p, name + ".conv2", cout, cout, k, rng);
  add_norm(p, name + ".gn2", cout);
  if (cin != cout) add_conv(p, name + ".skip", cin, cout, 1, rng, false);
}

template <class Real>
struct Builder {
  Tape<Real>& tape;
  const ModelParams<Real>& params;
  const ArchConfig& cfg;

  Var p(const std::string& name) const { return tape.parameter(params, name); }
  Var opt(const std::string& name) const { return params.contains(name) ? p(name) : Var{}; }

  Var conv(Var x, const std::string& name, int kernel, int stride = 1) const {
    return ag::conv1d(tape, x, p(name + ".w"), opt(name + ".b"), kernel, stride);
  }
  Var norm(Var x, const std::string& name, int channels) const {
    return ag::group_norm(tape, x, p(name + ".g"), p(name + ".b"), group_count(channels));
  }
  Var lin(Var x, const std::string& name) const { return ag::linear(tape, x, p(name + ".w"), p(name + ".b")); }

  Var resblock(Var x, const std::string& name, int cout, Var temb) const {
    const int k = cfg.kernel_size;
    Var h = conv(x, name + ".conv1", k);
    h = norm(h, name + ".gn1", cout);
    h = ag::add_col_bias(tape, h, lin(temb, name + ".step"));
    h = ag::silu(tape, h);
    h = conv(h, name + ".conv2", k);
    h = norm(h, name + ".gn2", cout);
    h = ag::silu(tape, h);
    Var skip = params.contains(name + ".skip.w") ? conv(x, name + ".skip", 1) : x;
    return ag::add(tape, h, skip);
  }

  Var step_vector(int t) const {
    const auto e = step_embedding(t, cfg.step_embed_dim);
    Tensor<Real> v(e.size(), 1);
    for (std::size_t i = 0; i < e.size(); ++i) v[i] = static_cast<Real>(e[i]);
    return tape.constant(std::move(v));
  }
};

}  // namespace

void ArchConfig::validate() const {
  require(blocks >= 1, ErrorCategory::kInvalidArgument, "need at least one block");
  require(static_cast<int>(channel_multipliers.size()) == blocks, ErrorCategory::kInvalidArgument,
          "one channel multiplier per block is required");
  require(base_channels >= 1 && kernel_size >= 1 && kernel_size % 2 == 1, ErrorCategory::kInvalidArgument,
          "base channels must be positive and the kernel size odd");
  require(step_embed_dim >= 2 && step_embed_dim % 2 == 0, ErrorCategory::kInvalidArgument,
          "step embedding dimension must be positive and even");
  for (int m : channel_multipliers) require(m >= 1, ErrorCategory::kInvalidArgument, "channel multipliers must be >= 1");
  for (const auto& c : contexts) {
    require(c.dim >= 1, ErrorCategory::kInvalidArgument, "context dims must be positive");
    if (is_categorical(c.kind)) {
      require(c.vocab >= 1, ErrorCategory::kInvalidArgument, "categorical context needs a vocabulary size");
    } else {
      require(c.payload_dim >= 1, ErrorCategory::kInvalidArgument, "context payload dim must be positive");
    }
  }
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    for (std::size_t j = i + 1; j < contexts.size(); ++j) {
      require(contexts[i].kind != contexts[j].kind, ErrorCategory::kInvalidArgument, "context kinds must be unique");
    }
  }
  require(length >= 1, ErrorCategory::kInvalidArgument, "length must be positive");
  validate_length(static_cast<std::size_t>(length));
}

void ArchConfig::validate_length(std::size_t L) const {
  const std::size_t unit = std::size_t(1) << (blocks - 1);
  if (L == 0 || L % unit != 0) {
    fail(ErrorCategory::kShapeMismatch,
         "sequence length " + std::to_string(L) + " is not a multiple of 2^(b-1) = " + std::to_string(unit));
  }
}

int ArchConfig::condition_depth() const {
  int d = static_cast<int>(kBaseChannels);
  for (const auto& c : contexts) d += c.dim;
  return d;
}

const ContextSpec& ArchConfig::context_spec(ContextKind kind) const {
  for (const auto& c : contexts) {
    if (c.kind == kind) return c;
  }
  fail(ErrorCategory::kInvalidArgument, "context kind not registered: " + std::string(context_kind_name(kind)));
}

int group_count(int channels) {
  int g = std::max(1, std::min(8, channels / 2));
  while (channels % g != 0) --g;
  return g;
}

template <class Real>
HiddenState<Real> HiddenState<Real>::zeros(const ArchConfig& cfg, std::size_t L) {
  HiddenState s;
  for (int i = 0; i < cfg.blocks; ++i) s.features.emplace_back(cfg.channels(i), cfg.scale_length(i, L));
  return s;
}

template <class Real>
bool HiddenState<Real>::matches(const ArchConfig& cfg, std::size_t L) const {
  if (static_cast<int>(features.size()) != cfg.blocks) return false;
  for (int i = 0; i < cfg.blocks; ++i) {
    if (features[i].rows() != std::size_t(cfg.channels(i)) || features[i].cols() != cfg.scale_length(i, L)) return false;
  }
  return true;
}

template <class Real>
bool HiddenState<Real>::all_zero() const {
  for (const auto& f : features) {
    for (Real v : f.values()) {
      if (v != Real(0)) return false;
    }
  }
  return true;
}

ModelParams<float> init_params(const ArchConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelParams<float> p;
  const int k = cfg.kernel_size;
  const int e = cfg.step_embed_dim;
  add_conv(p, "unet.in", cfg.condition_depth(), cfg.channels(0), k, rng);
  add_linear(p, "unet.temb.l1", e, e, rng);
  add_linear(p, "unet.temb.l2", e, e, rng);
  for (int i = 0; i < cfg.blocks; ++i) {
    const int c = cfg.channels(i);
    add_conv(p, scale_name("unet.enc", i) + ".fuse", c, c, 1, rng, false);
    add_resblock(p, scale_name("unet.enc", i) + ".res", c, c, k, e, rng);
    if (i + 1 < cfg.blocks) add_conv(p, scale_name("unet.down", i), c, cfg.channels(i + 1), k, rng);
  }
  for (int i = cfg.blocks - 1; i >= 0; --i) {
    const int c = cfg.channels(i);
    add_resblock(p, scale_name("unet.dec", i) + ".res", 2 * c, c, k, e, rng);
    if (i > 0) add_conv(p, scale_name("unet.up", i), c, cfg.channels(i - 1), k, rng);
  }
  p.add("unet.out.w", Tensor<float>(2, cfg.channels(0)));
  p.add("unet.out.b", Tensor<float>(2, 1));

  add_linear(p, "gru.temb.l1", e, e, rng);
  for (int i = 0; i < cfg.blocks; ++i) {
    const int c = cfg.channels(i);
    add_conv(p, scale_name("gru.cell", i) + ".zr", 2 * c, 2 * c, k, rng);
    add_conv(p, scale_name("gru.cell", i) + ".n", 2 * c, c, k, rng);
    add_linear(p, scale_name("gru.cell", i) + ".step", e, 3 * c, rng);
  }

  for (std::size_t j = 0; j < cfg.contexts.size(); ++j) {
    const auto& spec = cfg.contexts[j];
    const std::string name = "ctx" + std::to_string(j + 1);
    if (is_categorical(spec.kind)) {
      Tensor<float> table(spec.vocab, spec.dim);
      for (auto& v : table.values()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
      p.add(name + ".table", std::move(table));
    } else {
      add_linear(p, name, spec.payload_dim, spec.dim, rng);
    }
  }
  return p;
}

std::vector<double> step_embedding(int t, int dim) {
  require(dim >= 2 && dim % 2 == 0, ErrorCategory::kInvalidArgument, "step embedding dimension must be even");
  std::vector<double> out(dim);
  for (int k = 0; k < dim / 2; ++k) {
    const double freq = std::pow(10000.0, -2.0 * k / dim);
    out[2 * k] = std::sin(t * freq);
    out[2 * k + 1] = std::cos(t * freq);
  }
  return out;
}

template <class Real>
Tensor<Real> prior_noise(const Tensor<Real>& cond, double alpha_bar) {
  require(alpha_bar > 0 && alpha_bar < 1, ErrorCategory::kInvalidArgument,
          "the interpolation residual needs alpha_bar in (0, 1)");
  const double a = std::sqrt(alpha_bar), s = std::sqrt(1 - alpha_bar);
  Tensor<Real> out(2, cond.cols());
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t l = 0; l < cond.cols(); ++l) {
      if (cond(kMaskChannel, l) == Real(0)) continue;
      out(r, l) = static_cast<Real>((double(cond(kPointChannels + r, l)) - a * double(cond(kLerpChannels + r, l))) / s);
    }
  }
  return out;
}

bool is_state_parameter(const std::string& name) {
  return name.rfind("gru.", 0) == 0 || (name.rfind("unet.enc", 0) == 0 && name.find(".fuse.") != std::string::npos);
}

namespace net {

template <class Real>
std::vector<Var> embed_contexts(Tape<Real>& tape, const ModelParams<Real>& params, const ArchConfig& cfg,
                                const std::vector<Context>& contexts, std::size_t L) {
  Builder<Real> b{tape, params, cfg};
  std::vector<Var> out;
  for (std::size_t j = 0; j < cfg.contexts.size(); ++j) {
    const auto& spec = cfg.contexts[j];
    auto it = std::find_if(contexts.begin(), contexts.end(), [&](const Context& c) { return c.kind == spec.kind; });
    if (it == contexts.end()) {
      fail(ErrorCategory::kInvalidArgument, "task lacks context " + std::string(context_kind_name(spec.kind)));
    }
    const std::string name = "ctx" + std::to_string(j + 1);
    if (is_categorical(spec.kind)) {
      require(it->payload.size() == 1, ErrorCategory::kShapeMismatch, "categorical context payload must be one value");
      const double idx = it->payload[0];
      require(idx >= 0 && idx == std::floor(idx), ErrorCategory::kInvalidArgument, "category index must be integral");
      out.push_back(ag::embedding_row(tape, b.p(name + ".table"), static_cast<std::size_t>(idx), L));
    } else {
      require(it->payload.size() == std::size_t(spec.payload_dim), ErrorCategory::kShapeMismatch,
              "context payload dimensionality differs from its registration");
      Tensor<Real> v(spec.payload_dim, 1);
      for (int d = 0; d < spec.payload_dim; ++d) v[d] = static_cast<Real>(it->payload[d]);
      Var e = b.lin(tape.constant(std::move(v)), name);
      out.push_back(ag::broadcast_cols(tape, e, L));
    }
  }
  return out;
}

template <class Real>
Var condition(Tape<Real>& tape, const Tensor<Real>& base_channels, const std::vector<Var>& embeddings) {
  std::vector<Var> parts{tape.constant(base_channels)};
  parts.insert(parts.end(), embeddings.begin(), embeddings.end());
  return parts.size() == 1 ? parts.front() : ag::concat_rows(tape, parts);
}

template <class Real>
DenoiseVars denoise(Tape<Real>& tape, const ModelParams<Real>& params, const ArchConfig& cfg, Var cond,
                    const std::vector<Var>& state_in, int t, DenoiseOptions opts) {
  Builder<Real> b{tape, params, cfg};
  const auto& cv = tape.value(cond);
  const std::size_t L = cv.cols();
  cfg.validate_length(L);
  if (cv.rows() != std::size_t(cfg.condition_depth())) {
    fail(ErrorCategory::kShapeMismatch, "condition depth " + std::to_string(cv.rows()) + " differs from configured " +
                                            std::to_string(cfg.condition_depth()));
  }
  if (opts.fuse_state) {
    require(static_cast<int>(state_in.size()) == cfg.blocks, ErrorCategory::kShapeMismatch,
            "state must have one entry per block");
    for (int i = 0; i < cfg.blocks; ++i) {
      const auto& f = tape.value(state_in[i]);
      if (f.rows() != std::size_t(cfg.channels(i)) || f.cols() != cfg.scale_length(i, L)) {
        fail(ErrorCategory::kShapeMismatch, "state scale " + std::to_string(i + 1) + " has shape " + f.shape_string());
      }
    }
  }

  Var temb = b.step_vector(t);
  temb = ag::silu(tape, b.lin(temb, "unet.temb.l1"));
  temb = ag::silu(tape, b.lin(temb, "unet.temb.l2"));

  Var x = b.conv(cond, "unet.in", cfg.kernel_size);
  std::vector<Var> skips;
  for (int i = 0; i < cfg.blocks; ++i) {
    const std::string enc = scale_name("unet.enc", i);
    if (opts.fuse_state) x = ag::add(tape, x, b.conv(state_in[i], enc + ".fuse", 1));
    x = b.resblock(x, enc + ".res", cfg.channels(i), temb);
    skips.push_back(x);
    if (i + 1 < cfg.blocks) x = b.conv(x, scale_name("unet.down", i), cfg.kernel_size, 2);
  }
  DenoiseVars out;
  out.state.resize(cfg.blocks);
  for (int i = cfg.blocks - 1; i >= 0; --i) {
    x = ag::concat_rows(tape, {x, skips[i]});
    x = b.resblock(x, scale_name("unet.dec", i) + ".res", cfg.channels(i), temb);
    out.state[i] = x;
    if (i > 0) x = b.conv(ag::upsample2(tape, x), scale_name("unet.up", i), cfg.kernel_size);
  }
  out.eps_hat = b.conv(x, "unet.out", 1);
  if (cfg.lerp_residual) out.eps_hat = ag::add(tape, out.eps_hat, tape.constant(prior_noise(tape.value(cond), opts.alpha_bar)));
  return out;
}

template <class Real>
std::vector<Var> propagate(Tape<Real>& tape, const ModelParams<Real>& params, const ArchConfig& cfg,
                           const std::vector<Var>& state_multi, const std::vector<Var>& state_single, int t) {
  Builder<Real> b{tape, params, cfg};
  require(static_cast<int>(state_multi.size()) == cfg.blocks && static_cast<int>(state_single.size()) == cfg.blocks,
          ErrorCategory::kShapeMismatch, "MCGRU states must have one entry per block");
  Var temb = ag::silu(tape, b.lin(b.step_vector(t), "gru.temb.l1"));
  std::vector<Var> out;
  for (int i = 0; i < cfg.blocks; ++i) {
    const auto& hv = tape.value(state_multi[i]);
    const auto& xv = tape.value(state_single[i]);
    if (!hv.same_shape(xv) || hv.rows() != std::size_t(cfg.channels(i))) {
      fail(ErrorCategory::kShapeMismatch,
           "MCGRU scale " + std::to_string(i + 1) + ": " + hv.shape_string() + " vs " + xv.shape_string());
    }
    const std::string cell = scale_name("gru.cell", i);
    const std::size_t c = hv.rows();
    Var h = state_multi[i];
    Var step = b.lin(temb, cell + ".step");
    Var zr = b.conv(ag::concat_rows(tape, {state_single[i], h}), cell + ".zr", cfg.kernel_size);
    Var z = ag::sigmoid(tape, ag::add_col_bias(tape, ag::slice_rows(tape, zr, 0, c), ag::slice_rows(tape, step, 0, c)));
    Var r = ag::sigmoid(tape, ag::add_col_bias(tape, ag::slice_rows(tape, zr, c, c), ag::slice_rows(tape, step, c, c)));
    Var n = b.conv(ag::concat_rows(tape, {state_single[i], ag::mul(tape, r, h)}), cell + ".n", cfg.kernel_size);
    n = ag::tanh(tape, ag::add_col_bias(tape, n, ag::slice_rows(tape, step, 2 * c, c)));
    out.push_back(ag::add(tape, ag::mul(tape, ag::one_minus(tape, z), h), ag::mul(tape, z, n)));
  }
  return out;
}

template <class Real>
std::vector<Var> state_constants(Tape<Real>& tape, const HiddenState<Real>& state) {
  std::vector<Var> out;
  for (const auto& f : state.features) out.push_back(tape.constant(f));
  return out;
}

template <class Real>
HiddenState<Real> state_values(const Tape<Real>& tape, const std::vector<Var>& vars) {
  HiddenState<Real> s;
  for (Var v : vars) s.features.push_back(tape.value(v));
  return s;
}

}  // namespace net

template <class Real>
DenoiseResult<Real> denoise_forward(const ConditionTensor<Real>& cond, const HiddenState<Real>& state_in, int t,
                                    const ModelParams<Real>& params, const ArchConfig& cfg, DenoiseOptions opts) {
  Tape<Real> tape(false);
  if (opts.fuse_state && !state_in.matches(cfg, cond.length())) {
    fail(ErrorCategory::kShapeMismatch, "hidden state shapes do not match the architecture");
  }
  Var c = tape.constant(cond.data);
  auto state = opts.fuse_state ? net::state_constants(tape, state_in) : std::vector<Var>{};
  auto vars = net::denoise(tape, params, cfg, c, state, t, opts);
  DenoiseResult<Real> out{tape.value(vars.eps_hat), net::state_values(tape, vars.state)};
  require(out.eps_hat.all_finite(), ErrorCategory::kNumeric, "non-finite noise prediction");
  for (const auto& f : out.state.features) require(f.all_finite(), ErrorCategory::kNumeric, "non-finite hidden state");
  return out;
}

template <class Real>
HiddenState<Real> propagate_state(const HiddenState<Real>& state_multi, const HiddenState<Real>& state_single, int t,
                                  const ModelParams<Real>& params, const ArchConfig& cfg) {
  require(state_multi.features.size() == state_single.features.size(), ErrorCategory::kShapeMismatch,
          "MCGRU states differ in scale count");
  Tape<Real> tape(false);
  auto out = net::propagate(tape, params, cfg, net::state_constants(tape, state_multi),
                            net::state_constants(tape, state_single), t);
  auto s = net::state_values(tape, out);
  for (const auto& f : s.features) require(f.all_finite(), ErrorCategory::kNumeric, "non-finite propagated state");
  return s;
}

template <class Real>
Tensor<Real> embed_context(const Context& ctx, std::size_t L, const ModelParams<Real>& params, const ArchConfig& cfg) {
  const auto& spec = cfg.context_spec(ctx.kind);
  ArchConfig single = cfg;
  single.contexts = {spec};
  // Re-map the parameter slot of this kind to ctx1 of the single-context view.
  std::size_t slot = 0;
  while (cfg.contexts[slot].kind != ctx.kind) ++slot;
  ModelParams<Real> view;
  const std::string src = "ctx" + std::to_string(slot + 1);
  for (const char* suffix : {".table", ".w", ".b"}) {
    if (params.contains(src + suffix)) view.add(std::string("ctx1") + suffix, params.value(src + suffix));
  }
  Tape<Real> tape(false);
  return tape.value(net::embed_contexts(tape, view, single, {ctx}, L).front());
}

template <class Real>
ConditionTensor<Real> build_condition(const MergedSequence& merged, const std::vector<Context>& contexts,
                                      const ModelParams<Real>& params, const ArchConfig& cfg) {
  Tape<Real> tape(false);
  auto vars = net::embed_contexts(tape, params, cfg, contexts, merged.length());
  std::vector<Tensor<Real>> embeddings;
  for (Var v : vars) embeddings.push_back(tape.value(v));
  return aggregate(merged, embeddings);
}

#define TRACE_INSTANTIATE(Real)                                                                                       \
  template Tensor<Real> prior_noise<Real>(const Tensor<Real>&, double);                                               \
  template struct HiddenState<Real>;                                                                                  \
  template std::vector<Var> net::embed_contexts<Real>(Tape<Real>&, const ModelParams<Real>&, const ArchConfig&,       \
                                                      const std::vector<Context>&, std::size_t);                      \
  template Var net::condition<Real>(Tape<Real>&, const Tensor<Real>&, const std::vector<Var>&);                       \
  template DenoiseVars net::denoise<Real>(Tape<Real>&, const ModelParams<Real>&, const ArchConfig&, Var,              \
                                          const std::vector<Var>&, int, DenoiseOptions);                              \
  template std::vector<Var> net::propagate<Real>(Tape<Real>&, const ModelParams<Real>&, const ArchConfig&,            \
                                                 const std::vector<Var>&, const std::vector<Var>&, int);              \
  template std::vector<Var> net::state_constants<Real>(Tape<Real>&, const HiddenState<Real>&);                        \
  template HiddenState<Real> net::state_values<Real>(const Tape<Real>&, const std::vector<Var>&);                     \
  template DenoiseResult<Real> denoise_forward<Real>(const ConditionTensor<Real>&, const HiddenState<Real>&, int,     \
                                                     const ModelParams<Real>&, const ArchConfig&, DenoiseOptions);    \
  template HiddenState<Real> propagate_state<Real>(const HiddenState<Real>&, const HiddenState<Real>&, int,           \
                                                   const ModelParams<Real>&, const ArchConfig&);                      \
  template Tensor<Real> embed_context<Real>(const Context&, std::size_t, const ModelParams<Real>&, const ArchConfig&); \
  template ConditionTensor<Real> build_condition<Real>(const MergedSequence&, const std::vector<Context>&,            \
                                                       const ModelParams<Real>&, const ArchConfig&);

TRACE_INSTANTIATE(float)
TRACE_INSTANTIATE(double)
#undef TRACE_INSTANTIATE

}  // namespace trace
