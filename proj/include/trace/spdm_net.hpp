#pragma once

// The state-propagating denoiser: a b-scale 1-D UNet that takes the condition
// tensor, the propagated multi-scale state and the diffusion step, and emits
// the predicted noise together with its own per-scale decoder features; the
// multi-scale convolutional GRU that folds those features into the
// propagated state; and the per-context embedders.
//
// Parameter naming (every tensor lives in one ModelParams):
//   unet.in.{w,b}              input projection D -> c_1
//   unet.temb.l{1,2}.{w,b}     step-embedding MLP
//   unet.enc<i>.fuse.w         state injection at scale i (c_i x c_i, 1x1)
//   unet.enc<i>.res.*          encoder residual block
//   unet.down<i>.{w,b}         stride-2 conv c_i -> c_{i+1}
//   unet.dec<i>.res.*          decoder residual block on [x; skip_i]
//   unet.up<i>.{w,b}           upsample + conv c_i -> c_{i-1}
//   unet.out.{w,b}             c_1 -> 2 noise head, zero-initialized
//   gru.temb.l1.{w,b}          MCGRU step-embedding projection
//   gru.cell<i>.{zr,n,step}.*  one step-aware conv-GRU per scale
//   ctx<k>.{table | w,b}       context embedders
// Scale indices i are 1-based in names.

#include <cstddef>
#include <string>
#include <vector>

#include "trace/autodiff.hpp"
#include "trace/params.hpp"
#include "trace/rng.hpp"
#include "trace/traj_core.hpp"

namespace trace {

struct ContextSpec {
  ContextKind kind = ContextKind::kCustom;
  int dim = 8;
  int vocab = 0;        // categorical kinds
  int payload_dim = 1;  // scalar / custom kinds
};

struct ArchConfig {
  int blocks = 4;
  int base_channels = 32;
  std::vector<int> channel_multipliers{1, 2, 4, 8};
  int kernel_size = 5;
  int step_embed_dim = 64;
  std::vector<ContextSpec> contexts;
  int length = 512;
  // Adds the noise implied by the interpolation prior to the network output
  // at query positions, so the network learns a correction to it.
  bool lerp_residual = false;

  void validate() const;
  void validate_length(std::size_t L) const;
  // 0-based scale.
  int channels(int scale) const { return base_channels * channel_multipliers.at(scale); }
  std::size_t scale_length(int scale, std::size_t L) const { return L >> scale; }
  int condition_depth() const;
  const ContextSpec& context_spec(ContextKind kind) const;
};

int group_count(int channels);

template <class Real>
struct HiddenState {
  std::vector<Tensor<Real>> features;  // features[i]: c_i x (L / 2^i)

  static HiddenState zeros(const ArchConfig& cfg, std::size_t L);
  bool matches(const ArchConfig& cfg, std::size_t L) const;
  bool all_zero() const;
  friend bool operator==(const HiddenState&, const HiddenState&) = default;
};

// Weights uniform in +-1/sqrt(fan_in), biases zero, norms identity, noise head
// zero so an untrained model predicts zero noise.
ModelParams<float> init_params(const ArchConfig& cfg, Rng& rng);

// Sinusoidal encoding: entry 2k is sin(t * w_k), entry 2k+1 is cos(t * w_k),
// with w_k = 10000^(-2k / dim).
std::vector<double> step_embedding(int t, int dim);

struct DenoiseOptions {
  // Off: the state input is ignored and no injection is applied, giving the
  // plain conditional denoiser.
  bool fuse_state = true;
  // alpha_bar of the current step; read only when lerp_residual is set.
  double alpha_bar = -1.0;
};

// (x - sqrt(alpha_bar) * lerp) / sqrt(1 - alpha_bar) at mask = 1 columns,
// zero elsewhere, read from the base channels of a condition tensor.
template <class Real>
Tensor<Real> prior_noise(const Tensor<Real>& cond, double alpha_bar);

struct DenoiseVars {
  Var eps_hat;             // 2 x L
  std::vector<Var> state;  // h_{t-1}, one entry per scale
};

namespace net {

template <class Real>
std::vector<Var> embed_contexts(Tape<Real>& tape, const ModelParams<Real>& params, const ArchConfig& cfg,
                                const std::vector<Context>& contexts, std::size_t L);

// Condition tensor on the tape: the fixed (points, time, mask, lerp) block
// followed by the embedding channels.
template <class Real>
Var condition(Tape<Real>& tape, const Tensor<Real>& base_channels, const std::vector<Var>& embeddings);

template <class Real>
DenoiseVars denoise(Tape<Real>& tape, const ModelParams<Real>& params, const ArchConfig& cfg, Var cond,
                    const std::vector<Var>& state_in, int t, DenoiseOptions opts = {});

template <class Real>
std::vector<Var> propagate(Tape<Real>& tape, const ModelParams<Real>& params, const ArchConfig& cfg,
                           const std::vector<Var>& state_multi, const std::vector<Var>& state_single, int t);

template <class Real>
std::vector<Var> state_constants(Tape<Real>& tape, const HiddenState<Real>& state);

template <class Real>
HiddenState<Real> state_values(const Tape<Real>& tape, const std::vector<Var>& vars);

}  // namespace net

template <class Real>
struct DenoiseResult {
  Tensor<Real> eps_hat;
  HiddenState<Real> state;
};

// One denoiser evaluation without gradient recording. Throws kShapeMismatch
// on mismatched inputs and kNumeric on non-finite activations.
template <class Real>
DenoiseResult<Real> denoise_forward(const ConditionTensor<Real>& cond, const HiddenState<Real>& state_in, int t,
                                    const ModelParams<Real>& params, const ArchConfig& cfg, DenoiseOptions opts = {});

template <class Real>
HiddenState<Real> propagate_state(const HiddenState<Real>& state_multi, const HiddenState<Real>& state_single, int t,
                                  const ModelParams<Real>& params, const ArchConfig& cfg);

template <class Real>
Tensor<Real> embed_context(const Context& ctx, std::size_t L, const ModelParams<Real>& params, const ArchConfig& cfg);

// Condition tensor with every context embedding evaluated once.
template <class Real>
ConditionTensor<Real> build_condition(const MergedSequence& merged, const std::vector<Context>& contexts,
                                      const ModelParams<Real>& params, const ArchConfig& cfg);

// Parameters that exist only for state propagation (state injection + MCGRU).
bool is_state_parameter(const std::string& name);

}  // namespace trace
