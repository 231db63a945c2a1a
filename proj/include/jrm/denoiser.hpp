#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "jrm/common.hpp"
#include "jrm/flow.hpp"
#include "jrm/io.hpp"
#include "jrm/nn/tape.hpp"

namespace jrm {

enum class CoupledVariant { Replace, Insert };

inline std::string_view variant_name(CoupledVariant v) {
  return v == CoupledVariant::Replace ? "replace" : "insert";
}

inline CoupledVariant parse_variant(std::string_view s) {
  if (s == "replace") return CoupledVariant::Replace;
  if (s == "insert") return CoupledVariant::Insert;
  throw ConfigError("unknown coupled variant '" + std::string(s) + "'");
}

struct ModelConfig {
  int depth_single = 6;
  CoupledVariant variant = CoupledVariant::Replace;
  int width = 128;
  int heads = 4;
  int tokens = 64;        // n
  int token_width = 6;    // L
  int cond_queries = 16;  // learned queries; one pooled token is appended
  int max_objects = 9;
  int time_embed_dim = 64;
  int ff_mult = 4;
  int point_features = 6;
  // Latent and encoder positions are multiplied by this so that their spread
  // is comparable to the unit-variance noise (object extents are ~0.5).
  double position_scale = 4.0;

  [[nodiscard]] int cond_tokens() const { return cond_queries + 1; }

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
    if (depth_single < 1) fail("depth_single must be >= 1");
    if (variant == CoupledVariant::Replace && depth_single < 2)
      fail("replace variant needs depth_single >= 2");
    if (width < 1 || heads < 1 || width % heads != 0) fail("width must be divisible by heads");
    if (tokens < 1 || token_width < 1) fail("token shape must be positive");
    if (cond_queries < 1) fail("cond_queries must be >= 1");
    if (max_objects < 1) fail("max_objects must be >= 1");
    if (time_embed_dim < 2 || time_embed_dim % 2 != 0) fail("time_embed_dim must be even");
    if (ff_mult < 1 || point_features < 1) fail("ff_mult and point_features must be >= 1");
    if (!(position_scale > 0.0) || !std::isfinite(position_scale)) fail("position_scale must be positive");
  }

  [[nodiscard]] io::KeyValues to_kv() const {
    io::KeyValues kv;
    kv.set("model.depth_single", depth_single);
    kv.set("model.variant", std::string(variant_name(variant)));
    kv.set("model.width", width);
    kv.set("model.heads", heads);
    kv.set("model.tokens", tokens);
    kv.set("model.token_width", token_width);
    kv.set("model.cond_queries", cond_queries);
    kv.set("model.max_objects", max_objects);
    kv.set("model.time_embed_dim", time_embed_dim);
    kv.set("model.ff_mult", ff_mult);
    kv.set("model.point_features", point_features);
    kv.set("model.position_scale", position_scale);
    return kv;
  }

  static ModelConfig from_kv(const io::KeyValues& kv) {
    ModelConfig c;
    auto geti = [&](const char* k, int& dst) {
      if (kv.has(k)) dst = static_cast<int>(kv.get_int(k));
    };
    geti("model.depth_single", c.depth_single);
    if (kv.has("model.variant")) c.variant = parse_variant(kv.get("model.variant"));
    geti("model.width", c.width);
    geti("model.heads", c.heads);
    geti("model.tokens", c.tokens);
    geti("model.token_width", c.token_width);
    geti("model.cond_queries", c.cond_queries);
    geti("model.max_objects", c.max_objects);
    geti("model.time_embed_dim", c.time_embed_dim);
    geti("model.ff_mult", c.ff_mult);
    geti("model.point_features", c.point_features);
    if (kv.has("model.position_scale")) c.position_scale = kv.get_double("model.position_scale");
    c.validate();
    return c;
  }
};

enum class BlockKind { Single, Coupled };

/// Replace: coupled blocks take every second single-stream slot.
/// Insert: a coupled block follows every single-stream block.
inline std::vector<BlockKind> block_layout(const ModelConfig& c) {
  std::vector<BlockKind> out;
  for (int i = 0; i < c.depth_single; ++i) {
    if (c.variant == CoupledVariant::Replace) {
      out.push_back(i % 2 == 1 ? BlockKind::Coupled : BlockKind::Single);
    } else {
      out.push_back(BlockKind::Single);
      out.push_back(BlockKind::Coupled);
    }
  }
  return out;
}

struct InitOptions {
  bool zero_output_head = true;
  bool zero_modulation = true;  // adaLN-zero: blocks start as identity
};

/// Closed-form trainable scalar count for a configuration.
inline std::int64_t parameter_count(const ModelConfig& c) {
  const std::int64_t w = c.width, L = c.token_width, te = c.time_embed_dim, pf = c.point_features,
                     q = c.cond_queries, ff = static_cast<std::int64_t>(c.ff_mult) * w;
  const std::int64_t time = te * w + w + w * w + w;
  const std::int64_t latent_in = L * w + w;
  const std::int64_t encoder = (pf * w + w) + (w * w + w) + q * w + 3 * w * w + (w * w + w) +
                               (w * w + w) + (q + 1) * w;
  const std::int64_t block = (6 * w * w + 6 * w) + (3 * w * w + 3 * w) + (w * w + w) +
                             (w * ff + ff) + (ff * w + w);
  const std::int64_t head = (2 * w * w + 2 * w) + (w * L + L);
  const auto blocks = static_cast<std::int64_t>(block_layout(c).size());
  return time + latent_in + encoder + blocks * block + head;
}

template <typename T>
class Denoiser {
 public:
  using Mat = nn::Matrix<T>;
  using Tape = nn::Tape<T>;
  using Var = typename Tape::Var;

  struct BlockParams {
    std::size_t mod_w, mod_b, qkv_w, qkv_b, out_w, out_b, ff1_w, ff1_b, ff2_w, ff2_b;
  };

  ModelConfig config;
  nn::ParameterSet<T> params;

  explicit Denoiser(ModelConfig cfg) : config(cfg) {
    config.validate();
    declare();
  }

  [[nodiscard]] const std::vector<BlockKind>& layout() const { return layout_; }

  /// Scaled-normal weights (std 1/sqrt(fan_in)), zero biases, zero output
  /// head and zero modulation by default.
  void init_params(std::uint64_t seed, InitOptions opt = {}) {
    Rng rng(mix_seed(seed, 0x1417));
    for (auto& p : params) {
      p.grad.setZero();
      const bool is_bias = p.name.ends_with(".b");
      const bool is_head = p.name.starts_with("head.out");
      const bool is_mod = p.name.ends_with("mod.w");
      if (is_bias || (is_head && opt.zero_output_head) || (is_mod && opt.zero_modulation)) {
        p.value.setZero();
        continue;
      }
      double std = 1.0 / std::sqrt(static_cast<double>(p.value.rows()));
      if (p.name == "enc.queries" || p.name == "enc.null") std = 1.0;
      for (Eigen::Index i = 0; i < p.value.size(); ++i)
        p.value.data()[i] = static_cast<T>(normal(rng, 0.0, std));
    }
  }

  /// Condition tokens (c x width) for one observation given in the object's
  /// frame. Symmetric in point order; empty input maps to the null tokens.
  Var encode_condition(Tape& tape, const PointSet& obs) {
    if (obs.empty()) return tape.param(params[enc_null_]);
    Mat pts(static_cast<Eigen::Index>(obs.size()), config.point_features);
    pts.setZero();
    for (std::size_t i = 0; i < obs.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      for (int a = 0; a < 3 && a < config.point_features; ++a)
        pts(r, a) = static_cast<T>(config.position_scale * obs.points[i][a]);
      for (int a = 0; a < 3 && 3 + a < config.point_features; ++a)
        pts(r, 3 + a) = static_cast<T>(obs.normals[i][a]);
    }
    Var x = tape.constant(std::move(pts));
    Var f = tape.gelu(tape.linear(x, P(tape, enc_pt1_w_), P(tape, enc_pt1_b_)));
    f = tape.linear(f, P(tape, enc_pt2_w_), P(tape, enc_pt2_b_));
    Var queries = P(tape, enc_queries_);
    Var q = tape.matmul(queries, P(tape, enc_q_w_));
    Var k = tape.matmul(f, P(tape, enc_k_w_));
    Var v = tape.matmul(f, P(tape, enc_v_w_));
    Var a = tape.attention(q, k, v, config.heads);
    Var qo = tape.add(queries, tape.linear(a, P(tape, enc_o_w_), P(tape, enc_o_b_)));
    Var pooled = tape.linear(tape.mean_rows(f), P(tape, enc_pool_w_), P(tape, enc_pool_b_));
    return tape.concat_rows({qo, pooled});
  }

  /// Time embedding passed through SiLU; feeds every modulation layer.
  Var time_features(Tape& tape, T t) {
    const int half = config.time_embed_dim / 2;
    Mat e(1, config.time_embed_dim);
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / half);
      const double arg = 1000.0 * static_cast<double>(t) * freq;
      e(0, i) = static_cast<T>(std::cos(arg));
      e(0, half + i) = static_cast<T>(std::sin(arg));
    }
    Var h = tape.silu(tape.linear(tape.constant(std::move(e)), P(tape, t1_w_), P(tape, t1_b_)));
    h = tape.linear(h, P(tape, t2_w_), P(tape, t2_b_));
    return tape.silu(h);
  }

  /// One transformer block with adaLN modulation. Queries come from `latent`
  /// only; keys and values cover latent plus `context` rows when given. Only
  /// the latent rows are returned.
  Var block(Tape& tape, std::size_t b, Var latent, const Var* context, Var time_feat) {
    const BlockParams& bp = blocks_[b];
    const Eigen::Index w = config.width;
    Var mod = tape.linear(time_feat, P(tape, bp.mod_w), P(tape, bp.mod_b));
    Var shift1 = tape.slice_cols(mod, 0, w), scale1 = tape.slice_cols(mod, w, w),
        gate1 = tape.slice_cols(mod, 2 * w, w), shift2 = tape.slice_cols(mod, 3 * w, w),
        scale2 = tape.slice_cols(mod, 4 * w, w), gate2 = tape.slice_cols(mod, 5 * w, w);

    const Eigen::Index rows = tape.value(latent).rows();
    Var x = context ? tape.concat_rows({latent, *context}) : latent;
    Var xn = tape.modulate(tape.layer_norm(x), shift1, scale1);
    Var qkv = tape.linear(xn, P(tape, bp.qkv_w), P(tape, bp.qkv_b));
    Var q = tape.slice_cols(context ? tape.slice_rows(qkv, 0, rows) : qkv, 0, w);
    Var k = tape.slice_cols(qkv, w, w);
    Var v = tape.slice_cols(qkv, 2 * w, w);
    Var a = tape.linear(tape.attention(q, k, v, config.heads), P(tape, bp.out_w), P(tape, bp.out_b));
    Var h = tape.add(latent, tape.mul_row(a, gate1));

    Var m = tape.modulate(tape.layer_norm(h), shift2, scale2);
    m = tape.gelu(tape.linear(m, P(tape, bp.ff1_w), P(tape, bp.ff1_b)));
    m = tape.linear(m, P(tape, bp.ff2_w), P(tape, bp.ff2_b));
    return tape.add(h, tape.mul_row(m, gate2));
  }

  /// Concatenates all objects' latent tokens, runs block `b` over the joint
  /// set (no condition tokens) and splits at the original boundaries.
  std::vector<Var> coupled_fusion_block(Tape& tape, std::size_t b, const std::vector<Var>& latents,
                                        Var time_feat) {
    if (latents.empty() || latents.size() > static_cast<std::size_t>(config.max_objects))
      throw CapacityError("coupled_fusion_block: object count outside [1, max_objects]");
    const Eigen::Index rows = tape.value(latents[0]).rows();
    for (Var z : latents)
      if (tape.value(z).rows() != rows || tape.value(z).cols() != config.width)
        throw DimensionError("coupled_fusion_block: token sets differ in shape");
    Var joint = latents.size() == 1 ? latents[0] : tape.concat_rows(latents);
    Var fused = block(tape, b, joint, nullptr, time_feat);
    if (latents.size() == 1) return {fused};
    std::vector<Var> out;
    for (std::size_t k = 0; k < latents.size(); ++k)
      out.push_back(tape.slice_rows(fused, static_cast<Eigen::Index>(k) * rows, rows));
    return out;
  }

  struct ForwardOptions {
    bool ablate_coupled = false;  // treat every coupled block as identity
  };

  /// Velocity prediction for K objects sharing one noise level.
  std::vector<Var> forward(Tape& tape, const std::vector<Var>& z, T t, const std::vector<Var>& cond,
                           ForwardOptions opt = {}) {
    const std::size_t k_count = z.size();
    if (k_count == 0 || cond.size() != k_count)
      throw DimensionError("forward: need one condition per object");
    if (k_count > static_cast<std::size_t>(config.max_objects))
      throw CapacityError("forward: " + std::to_string(k_count) + " objects exceed max_objects " +
                          std::to_string(config.max_objects));
    for (std::size_t k = 0; k < k_count; ++k) {
      if (tape.value(z[k]).rows() != config.tokens || tape.value(z[k]).cols() != config.token_width)
        throw DimensionError("forward: latent tokens have the wrong shape");
      if (tape.value(cond[k]).rows() != config.cond_tokens() ||
          tape.value(cond[k]).cols() != config.width)
        throw DimensionError("forward: condition tokens have the wrong shape");
    }
    Var tf = time_features(tape, t);
    std::vector<Var> h;
    for (Var zk : z) h.push_back(tape.linear(zk, P(tape, in_w_), P(tape, in_b_)));
    for (std::size_t b = 0; b < layout_.size(); ++b) {
      if (layout_[b] == BlockKind::Single) {
        for (std::size_t k = 0; k < k_count; ++k) h[k] = block(tape, b, h[k], &cond[k], tf);
      } else if (!opt.ablate_coupled) {
        h = coupled_fusion_block(tape, b, h, tf);
      }
    }
    Var fmod = tape.linear(tf, P(tape, fmod_w_), P(tape, fmod_b_));
    Var shift = tape.slice_cols(fmod, 0, config.width);
    Var scale = tape.slice_cols(fmod, config.width, config.width);
    std::vector<Var> out;
    for (Var hk : h) {
      Var y = tape.modulate(tape.layer_norm(hk), shift, scale);
      out.push_back(tape.linear(y, P(tape, head_w_), P(tape, head_b_)));
    }
    for (Var o : out)
      if (!tape.value(o).allFinite()) throw NonFiniteError("forward: non-finite velocity");
    return out;
  }

  // ---- inference helpers (no gradient bookkeeping) ---------------------------

  Mat condition_tokens(const PointSet& obs) {
    Tape tape(false);
    return tape.value(encode_condition(tape, obs));
  }

  std::vector<LatentTokens> velocity(const std::vector<LatentTokens>& z, double t,
                                     const std::vector<Mat>& cond, ForwardOptions opt = {}) {
    Tape tape(false);
    std::vector<Var> zv, cv;
    for (const auto& zk : z) zv.push_back(tape.constant(zk.template cast<T>()));
    for (const auto& ck : cond) cv.push_back(tape.constant(ck));
    std::vector<LatentTokens> out;
    for (Var o : forward(tape, zv, static_cast<T>(t), cv, opt))
      out.push_back(tape.value(o).template cast<double>());
    return out;
  }

  /// Joint reconstruction of K objects from their observations (object frames).
  /// Normals of the result are re-normalised.
  std::vector<LatentTokens> generate(const std::vector<PointSet>& observations, int steps,
                                     std::uint64_t seed, ForwardOptions opt = {}) {
    if (observations.size() > static_cast<std::size_t>(config.max_objects))
      throw CapacityError("generate: too many objects for one group");
    std::vector<Mat> cond;
    for (const auto& o : observations) cond.push_back(condition_tokens(o));
    auto field = [&](const std::vector<LatentTokens>& z, double t) { return velocity(z, t, cond, opt); };
    auto out = sample_joint(field, observations.size(), config.tokens, config.token_width, steps, seed);
    for (auto& z : out) {
      z = from_latent(z);
      normalize_token_normals(z);
    }
    return out;
  }

  /// Point tokens <-> latent tokens: position columns are scaled.
  [[nodiscard]] LatentTokens to_latent(const LatentTokens& tokens) const {
    LatentTokens z = tokens;
    z.leftCols(std::min<Eigen::Index>(3, z.cols())) *= config.position_scale;
    return z;
  }
  [[nodiscard]] LatentTokens from_latent(const LatentTokens& z) const {
    LatentTokens tokens = z;
    tokens.leftCols(std::min<Eigen::Index>(3, tokens.cols())) /= config.position_scale;
    return tokens;
  }

  static void normalize_token_normals(LatentTokens& z) {
    if (z.cols() < 6) return;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      auto n = z.block<1, 3>(i, 3);
      const double len = n.norm();
      if (len > 1e-12)
        n /= len;
      else
        n << 0.0, 1.0, 0.0;
    }
  }

 private:
  std::size_t add(const std::string& name, Eigen::Index r, Eigen::Index c) {
    return params.add(name, r, c);
  }

  Var P(Tape& tape, std::size_t i) { return tape.param(params[i]); }

  void declare() {
    const Eigen::Index w = config.width, L = config.token_width;
    t1_w_ = add("time.fc1.w", config.time_embed_dim, w);
    t1_b_ = add("time.fc1.b", 1, w);
    t2_w_ = add("time.fc2.w", w, w);
    t2_b_ = add("time.fc2.b", 1, w);
    in_w_ = add("latent.in.w", L, w);
    in_b_ = add("latent.in.b", 1, w);
    enc_pt1_w_ = add("enc.point1.w", config.point_features, w);
    enc_pt1_b_ = add("enc.point1.b", 1, w);
    enc_pt2_w_ = add("enc.point2.w", w, w);
    enc_pt2_b_ = add("enc.point2.b", 1, w);
    enc_queries_ = add("enc.queries", config.cond_queries, w);
    enc_q_w_ = add("enc.attn.q.w", w, w);
    enc_k_w_ = add("enc.attn.k.w", w, w);
    enc_v_w_ = add("enc.attn.v.w", w, w);
    enc_o_w_ = add("enc.attn.out.w", w, w);
    enc_o_b_ = add("enc.attn.out.b", 1, w);
    enc_pool_w_ = add("enc.pool.w", w, w);
    enc_pool_b_ = add("enc.pool.b", 1, w);
    enc_null_ = add("enc.null", config.cond_tokens(), w);
    layout_ = block_layout(config);
    const Eigen::Index ff = static_cast<Eigen::Index>(config.ff_mult) * w;
    for (std::size_t b = 0; b < layout_.size(); ++b) {
      const std::string p = "block" + std::to_string(b) +
                            (layout_[b] == BlockKind::Single ? ".single." : ".coupled.");
      BlockParams bp{};
      bp.mod_w = add(p + "mod.w", w, 6 * w);
      bp.mod_b = add(p + "mod.b", 1, 6 * w);
      bp.qkv_w = add(p + "qkv.w", w, 3 * w);
      bp.qkv_b = add(p + "qkv.b", 1, 3 * w);
      bp.out_w = add(p + "attn_out.w", w, w);
      bp.out_b = add(p + "attn_out.b", 1, w);
      bp.ff1_w = add(p + "ff1.w", w, ff);
      bp.ff1_b = add(p + "ff1.b", 1, ff);
      bp.ff2_w = add(p + "ff2.w", ff, w);
      bp.ff2_b = add(p + "ff2.b", 1, w);
      blocks_.push_back(bp);
    }
    fmod_w_ = add("head.mod.w", w, 2 * w);
    fmod_b_ = add("head.mod.b", 1, 2 * w);
    head_w_ = add("head.out.w", w, L);
    head_b_ = add("head.out.b", 1, L);
  }

  std::vector<BlockKind> layout_;
  std::vector<BlockParams> blocks_;
  std::size_t t1_w_{}, t1_b_{}, t2_w_{}, t2_b_{}, in_w_{}, in_b_{};
  std::size_t enc_pt1_w_{}, enc_pt1_b_{}, enc_pt2_w_{}, enc_pt2_b_{}, enc_queries_{}, enc_q_w_{},
      enc_k_w_{}, enc_v_w_{}, enc_o_w_{}, enc_o_b_{}, enc_pool_w_{}, enc_pool_b_{}, enc_null_{};
  std::size_t fmod_w_{}, fmod_b_{}, head_w_{}, head_b_{};
};

// ---------------------------------------------------------------------------
// Optimisation

template <typename T>
struct AdamState {
  std::vector<nn::Matrix<T>> m, v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void reset(const nn::ParameterSet<T>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.push_back(nn::Matrix<T>::Zero(p.value.rows(), p.value.cols()));
      v.push_back(nn::Matrix<T>::Zero(p.value.rows(), p.value.cols()));
    }
    step = 0;
  }
};

template <typename T>
void adam_update(nn::ParameterSet<T>& params, AdamState<T>& st, double lr) {
  if (st.m.size() != params.size()) st.reset(params);
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  const T b1 = static_cast<T>(st.beta1), b2 = static_cast<T>(st.beta2);
  const T step_size = static_cast<T>(lr / c1);
  const T inv_c2 = static_cast<T>(1.0 / c2);
  const T eps = static_cast<T>(st.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    st.m[i] = b1 * st.m[i] + (T(1) - b1) * p.grad;
    st.v[i] = b2 * st.v[i] + (T(1) - b2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= step_size * st.m[i].array() / ((st.v[i].array() * inv_c2).sqrt() + eps);
  }
}

/// One training example: K objects, each with an observation in its own frame
/// and its ground-truth latent.
struct JointExample {
  std::vector<PointSet> observations;
  std::vector<LatentTokens> targets;
};

struct TrainStats {
  double loss = 0.0;
  double grad_norm = 0.0;
  double t = 0.0;
};

inline constexpr double kDefaultLearningRate = 1e-3;
inline constexpr double kDefaultGradClip = 1.0;

/// Joint flow-matching loss and its gradient for a batch, accumulated into
/// params' grads (which are zeroed first). Loss is averaged over the batch.
template <typename T>
TrainStats accumulate_gradients(Denoiser<T>& model, const std::vector<JointExample>& batch,
                                std::uint64_t seed) {
  if (batch.empty()) throw InputError("train_step: empty batch");
  model.params.zero_grad();
  TrainStats stats;
  const T inv_batch = T(1) / static_cast<T>(batch.size());
  for (std::size_t e = 0; e < batch.size(); ++e) {
    const JointExample& ex = batch[e];
    if (ex.observations.size() != ex.targets.size() || ex.targets.empty())
      throw InputError("train_step: each object needs an observation and a target");
    Rng rng(mix_seed(seed, 0x7EA1, e));
    double t = 0.0;
    while (t <= 0.0) t = uniform(rng, 0.0, 1.0);
    typename Denoiser<T>::Tape tape(true);
    std::vector<typename Denoiser<T>::Var> zt, cond;
    std::vector<LatentTokens> vt;
    for (std::size_t k = 0; k < ex.targets.size(); ++k) {
      const LatentTokens z0 = model.to_latent(ex.targets[k]);
      const LatentTokens eps = gaussian_tokens(z0.rows(), z0.cols(), rng);
      zt.push_back(tape.constant(interpolate(z0, eps, t).template cast<T>()));
      vt.push_back(target_velocity(z0, eps));
      cond.push_back(model.encode_condition(tape, ex.observations[k]));
    }
    auto pred = model.forward(tape, zt, static_cast<T>(t), cond);
    std::vector<typename Denoiser<T>::Var> losses;
    for (std::size_t k = 0; k < pred.size(); ++k)
      losses.push_back(tape.mse(pred[k], vt[k].template cast<T>()));
    auto total = tape.scale(tape.sum(losses), inv_batch);
    const double value = static_cast<double>(tape.value(total)(0, 0));
    if (!std::isfinite(value))
      throw NonFiniteError("train_step: non-finite loss at t=" + io::fmt_double(t));
    stats.loss += value;
    stats.t = t;
    tape.backward(total);
  }
  double sq = 0.0;
  for (const auto& p : model.params) sq += static_cast<double>(p.grad.squaredNorm());
  stats.grad_norm = std::sqrt(sq);
  if (!std::isfinite(stats.grad_norm)) throw NonFiniteError("train_step: non-finite gradient");
  return stats;
}

/// One optimiser update: gradients of the joint loss, global-norm clipping,
/// Adam step. Deterministic given (params, optimizer state, batch, seed).
template <typename T>
TrainStats train_step(Denoiser<T>& model, AdamState<T>& opt, const std::vector<JointExample>& batch,
                      std::uint64_t seed, double lr = kDefaultLearningRate,
                      double clip = kDefaultGradClip) {
  TrainStats stats = accumulate_gradients(model, batch, seed);
  if (clip > 0.0 && stats.grad_norm > clip) {
    const T s = static_cast<T>(clip / stats.grad_norm);
    for (auto& p : model.params) p.grad *= s;
  }
  adam_update(model.params, opt, lr);
  return stats;
}

}  // namespace jrm
