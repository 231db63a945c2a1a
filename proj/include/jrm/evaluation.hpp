#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "jrm/align.hpp"
#include "jrm/benchmark.hpp"
#include "jrm/config.hpp"
#include "jrm/denoiser.hpp"
#include "jrm/metrics.hpp"

namespace jrm {

struct EvalContext {
  Denoiser<float>* model = nullptr;
  int steps = 50;
  double tau = kDefaultTau;
  std::uint64_t seed = 0;
  std::size_t max_k = 9;
  std::string config_hash;
};

inline EvalContext make_eval_context(Denoiser<float>& model, const ExperimentConfig& cfg) {
  EvalContext c;
  c.model = &model;
  c.steps = static_cast<int>(cfg.count("eval.steps"));
  c.tau = cfg.real("eval.tau");
  c.seed = cfg.seed();
  c.max_k = std::min<std::size_t>(cfg.count("eval.max_k"),
                                  static_cast<std::size_t>(model.config.max_objects));
  c.config_hash = cfg.hash();
  return c;
}

/// Sampling seed of one reconstruction target. Every method evaluated on the
/// same target starts from the same noise, so method comparisons are paired.
inline std::uint64_t target_seed(const EvalContext& ctx, std::size_t scene, std::size_t key) {
  return mix_seed(ctx.seed, 0xE7A1, scene * 1024 + key);
}

/// Splits a group larger than max_k into consecutive chunks; the first chunk
/// keeps member 0.
inline std::vector<std::vector<std::size_t>> split_group(std::size_t size, std::size_t max_k) {
  if (max_k < 1) throw ConfigError("split_group: max_k must be >= 1");
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < size; i += max_k) {
    std::vector<std::size_t> chunk;
    for (std::size_t j = i; j < std::min(size, i + max_k); ++j) chunk.push_back(j);
    out.push_back(std::move(chunk));
  }
  return out;
}

/// Joint reconstruction of one group of object-frame observations.
inline std::vector<LatentTokens> reconstruct_group(const EvalContext& ctx,
                                                   const std::vector<PointSet>& obs,
                                                   std::uint64_t seed) {
  std::vector<LatentTokens> out(obs.size());
  const auto chunks = split_group(obs.size(), ctx.max_k);
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    std::vector<PointSet> part;
    for (std::size_t i : chunks[c]) part.push_back(obs[i]);
    auto z = ctx.model->generate(part, ctx.steps, c == 0 ? seed : mix_seed(seed, c));
    for (std::size_t j = 0; j < chunks[c].size(); ++j) out[chunks[c][j]] = std::move(z[j]);
  }
  return out;
}

struct EvalRow {
  std::string benchmark, method, condition, role;
  std::size_t scene = 0, arrangement = 0, instance = 0, group_size = 1;
  MetricsReport metrics;
};

inline constexpr const char* kEvalCsvHeader =
    "config_hash,seed,benchmark,scene,method,condition,arrangement,instance,role,group_size,"
    "cd,nc,f1,tau,sample_count";

inline CsvTable eval_table(const EvalContext& ctx, const std::vector<EvalRow>& rows) {
  CsvTable t(kEvalCsvHeader);
  for (const EvalRow& r : rows)
    t.row(ctx.config_hash, static_cast<std::size_t>(ctx.seed), r.benchmark, r.scene, r.method,
          r.condition, r.arrangement, r.instance, r.role, r.group_size, r.metrics.cd, r.metrics.nc,
          r.metrics.f1, r.metrics.tau, r.metrics.sample_count);
  return t;
}

namespace detail {

inline EvalRow make_row(const BenchScene& s, std::string method, std::string condition,
                        std::size_t arrangement, std::size_t k, std::size_t group,
                        const LatentTokens& z, const PointSet& gt, double tau) {
  EvalRow r;
  r.benchmark = std::string(benchmark_name(s.kind));
  r.scene = s.id;
  r.method = std::move(method);
  r.condition = std::move(condition);
  r.arrangement = arrangement;
  r.instance = k;
  r.role = s.objects[s.object_of[arrangement][k]].role;
  r.group_size = group;
  r.metrics = evaluate_reconstruction(z, gt, tau);
  return r;
}

inline Descriptor observation_descriptor(const PointSet& obs) {
  if (obs.size() < 32) return Descriptor{};  // too sparse: matches nothing
  return descriptor(obs);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Benchmark protocols

/// Target-only (K=1) and identical / similar / negative pairs: JRM reconstructs
/// the pair jointly from unaligned object-frame observations; the explicit
/// baseline fuses the source into the target frame with the oracle relative
/// pose and reconstructs once.
inline std::vector<EvalRow> evaluate_spatial(const EvalContext& ctx, const BenchScene& s) {
  std::vector<EvalRow> rows;
  const std::size_t t = s.instance_with_role("target");
  const PointSet obs_t = s.local_observation(0, t);
  const PointSet gt_t = s.local_ground_truth(0, t);
  const std::uint64_t seed = target_seed(ctx, s.id, t);
  const LatentTokens solo = reconstruct_group(ctx, {obs_t}, seed)[0];
  for (const char* method : {"jrm", "fm_align"})
    rows.push_back(detail::make_row(s, method, "target_only", 0, t, 1, solo, gt_t, ctx.tau));
  for (const char* role : {"identical", "similar", "negative"}) {
    const std::size_t src = s.instance_with_role(role);
    const PointSet obs_s = s.local_observation(0, src);
    const std::string cond = std::string(role) + "_pair";
    const auto joint = reconstruct_group(ctx, {obs_t, obs_s}, seed);
    rows.push_back(detail::make_row(s, "jrm", cond, 0, t, 2, joint[0], gt_t, ctx.tau));
    const PointSet fused = fuse_observations(obs_t, {obs_s}, {RigidTransform::identity()});
    const auto base = reconstruct_group(ctx, {fused}, seed);
    rows.push_back(detail::make_row(s, "fm_align", cond, 0, t, 1, base[0], gt_t, ctx.tau));
  }
  return rows;
}

/// Source observation of `src` (arrangement r) expressed in the frame of
/// target instance `t` (arrangement 0) via descriptor-free multi-start ICP on
/// the world-frame clouds.
inline PointSet predicted_alignment(const BenchScene& s, std::size_t t, std::size_t r,
                                    std::size_t src) {
  const PointSet& world_t = s.observations[0][t];
  const PointSet& world_s = s.observations[r][src];
  if (world_t.size() < 3 || world_s.size() < 3) return {};
  const RigidTransform est = register_multistart(world_s.points, world_t.points).transform;
  return (s.instance(0, t).pose().inverse() * est).apply(world_s);
}

/// Every arrangement-0 instance is a target. Rescan groups use 1 or 3 later
/// arrangements. Oracle rows follow the ground-truth matching table; "pred"
/// rows use descriptor matching and (for the baseline) ICP alignment.
inline std::vector<EvalRow> evaluate_temporal(const EvalContext& ctx, const BenchScene& s) {
  std::vector<EvalRow> rows;
  const std::size_t n = s.instance_count();
  std::vector<Matching> predicted(s.arrangements.size());
  for (std::size_t r = 1; r < s.arrangements.size(); ++r) {
    std::vector<Descriptor> dt, ds;
    for (std::size_t k = 0; k < n; ++k) {
      dt.push_back(detail::observation_descriptor(s.observations[0][k]));
      ds.push_back(detail::observation_descriptor(s.observations[r][k]));
    }
    predicted[r] = match_instances(dt, ds, MatchMode::Predicted);
  }
  for (std::size_t t = 0; t < n; ++t) {
    const PointSet obs_t = s.local_observation(0, t);
    const PointSet gt_t = s.local_ground_truth(0, t);
    const std::uint64_t seed = target_seed(ctx, s.id, t);
    const LatentTokens solo = reconstruct_group(ctx, {obs_t}, seed)[0];
    for (const char* method : {"jrm", "fm_align", "jrm_pred", "fm_align_pred"})
      rows.push_back(detail::make_row(s, method, "target_only", 0, t, 1, solo, gt_t, ctx.tau));
    for (std::size_t rescans : {std::size_t{1}, std::size_t{3}}) {
      if (rescans + 1 > s.arrangements.size()) continue;
      const std::string cond = "rescans_" + std::to_string(rescans);
      std::vector<PointSet> oracle{obs_t}, pred{obs_t}, pred_aligned;
      for (std::size_t r = 1; r <= rescans; ++r) {
        oracle.push_back(s.local_observation(r, s.matched_instance(r, t)));
        const std::size_t ps = *predicted[r].source_of(t);
        pred.push_back(s.local_observation(r, ps));
        pred_aligned.push_back(predicted_alignment(s, t, r, ps));
      }
      const auto joint = reconstruct_group(ctx, oracle, seed);
      rows.push_back(detail::make_row(s, "jrm", cond, 0, t, oracle.size(), joint[0], gt_t, ctx.tau));
      const auto joint_pred = reconstruct_group(ctx, pred, seed);
      rows.push_back(
          detail::make_row(s, "jrm_pred", cond, 0, t, pred.size(), joint_pred[0], gt_t, ctx.tau));
      const std::vector<PointSet> sources(oracle.begin() + 1, oracle.end());
      const PointSet fused = fuse_observations(
          obs_t, sources, std::vector<RigidTransform>(sources.size(), RigidTransform::identity()));
      rows.push_back(detail::make_row(s, "fm_align", cond, 0, t, 1,
                                      reconstruct_group(ctx, {fused}, seed)[0], gt_t, ctx.tau));
      const PointSet fused_pred = fuse_observations(
          obs_t, pred_aligned,
          std::vector<RigidTransform>(pred_aligned.size(), RigidTransform::identity()));
      rows.push_back(detail::make_row(s, "fm_align_pred", cond, 0, t, 1,
                                      reconstruct_group(ctx, {fused_pred}, seed)[0], gt_t, ctx.tau));
    }
  }
  return rows;
}

/// Three copies of one jointed shape: JRM reconstructs them jointly (K=3);
/// fm_ind reconstructs each alone; fm_align fuses all three observations into
/// each copy's frame. Each copy is scored against its own geometry.
inline std::vector<EvalRow> evaluate_articulated(const EvalContext& ctx, const BenchScene& s) {
  std::vector<EvalRow> rows;
  std::vector<std::size_t> copies;
  for (const char* role : {"copy0", "copy1", "copy2"}) copies.push_back(s.instance_with_role(role));
  std::vector<PointSet> obs, gt;
  for (std::size_t k : copies) {
    obs.push_back(s.local_observation(0, k));
    gt.push_back(s.local_ground_truth(0, k));
  }
  const std::uint64_t seed = target_seed(ctx, s.id, copies[0]);
  const auto joint = reconstruct_group(ctx, obs, seed);
  for (std::size_t c = 0; c < copies.size(); ++c) {
    rows.push_back(detail::make_row(s, "jrm", "joint", 0, copies[c], copies.size(), joint[c], gt[c], ctx.tau));
    const std::uint64_t own = target_seed(ctx, s.id, copies[c]);
    rows.push_back(detail::make_row(s, "fm_ind", "independent", 0, copies[c], 1,
                                    reconstruct_group(ctx, {obs[c]}, own)[0], gt[c], ctx.tau));
    std::vector<PointSet> others;
    for (std::size_t o = 0; o < copies.size(); ++o)
      if (o != c) others.push_back(obs[o]);
    const PointSet fused = fuse_observations(
        obs[c], others, std::vector<RigidTransform>(others.size(), RigidTransform::identity()));
    rows.push_back(detail::make_row(s, "fm_align", "fused", 0, copies[c], 1,
                                    reconstruct_group(ctx, {fused}, own)[0], gt[c], ctx.tau));
  }
  return rows;
}

inline std::vector<EvalRow> evaluate_scene(const EvalContext& ctx, const BenchScene& s) {
  switch (s.kind) {
    case BenchmarkKind::Spatial: return evaluate_spatial(ctx, s);
    case BenchmarkKind::Temporal: return evaluate_temporal(ctx, s);
    case BenchmarkKind::Articulated: return evaluate_articulated(ctx, s);
  }
  return {};
}

inline std::vector<EvalRow> evaluate_benchmark(const EvalContext& ctx,
                                               const std::vector<BenchScene>& scenes,
                                               std::size_t threads) {
  std::vector<std::vector<EvalRow>> per(scenes.size());
  parallel_for(scenes.size(), threads, [&](std::size_t i) { per[i] = evaluate_scene(ctx, scenes[i]); });
  std::vector<EvalRow> rows;
  for (auto& p : per) rows.insert(rows.end(), p.begin(), p.end());
  return rows;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepRow {
  std::string sweep;
  std::size_t cell = 0;
  double rot_deg = 0.0, trans = 0.0, neg_ratio = 0.0;
  std::size_t n_wrong = 0;
  EvalRow eval;
};

inline constexpr const char* kSweepCsvHeader =
    "config_hash,seed,sweep,cell,rot_deg,trans,n_wrong,neg_ratio,benchmark,scene,method,"
    "condition,instance,role,cd,nc,f1,tau,sample_count";

inline CsvTable sweep_table(const EvalContext& ctx, const std::vector<SweepRow>& rows) {
  CsvTable t(kSweepCsvHeader);
  for (const SweepRow& r : rows)
    t.row(ctx.config_hash, static_cast<std::size_t>(ctx.seed), r.sweep, r.cell, r.rot_deg, r.trans,
          r.n_wrong, r.neg_ratio, r.eval.benchmark, r.eval.scene, r.eval.method, r.eval.condition,
          r.eval.instance, r.eval.role, r.eval.metrics.cd, r.eval.metrics.nc, r.eval.metrics.f1,
          r.eval.metrics.tau, r.eval.metrics.sample_count);
  return t;
}

/// Seed of a sweep cell. Cell 0 reuses the evaluation seed so the error-free
/// cell reproduces the plain evaluation rows.
inline std::uint64_t cell_seed(std::uint64_t eval_seed, std::size_t cell) {
  return cell == 0 ? eval_seed : mix_seed(eval_seed, 0x5EE9, cell);
}

/// Identical-pair spatial setting with the baseline's relative pose corrupted
/// by (rot_deg[i], max_trans * i / (cells - 1)). JRM never sees the pose, so it
/// is run on the same unaligned observations with the cell's seed.
inline std::vector<SweepRow> sweep_alignment(const EvalContext& ctx,
                                             const std::vector<BenchScene>& scenes,
                                             const std::vector<double>& rot_deg, double max_trans,
                                             std::size_t threads) {
  std::vector<std::vector<SweepRow>> per(scenes.size());
  parallel_for(scenes.size(), threads, [&](std::size_t i) {
    const BenchScene& s = scenes[i];
    const std::size_t t = s.instance_with_role("target");
    const std::size_t src = s.instance_with_role("identical");
    const PointSet obs_t = s.local_observation(0, t), obs_s = s.local_observation(0, src);
    const PointSet gt_t = s.local_ground_truth(0, t);
    for (std::size_t c = 0; c < rot_deg.size(); ++c) {
      const double trans = max_trans * static_cast<double>(c) / static_cast<double>(rot_deg.size() - 1);
      const std::uint64_t seed = cell_seed(target_seed(ctx, s.id, t), c);
      const RigidTransform err = perturb_transform(RigidTransform::identity(), rot_deg[c], trans,
                                                   mix_seed(ctx.seed, 0xA11, s.id * 64 + c));
      const PointSet fused = fuse_observations(obs_t, {obs_s}, {err});
      SweepRow base{"align", c, rot_deg[c], trans, 0.0, 0,
                    detail::make_row(s, "fm_align", "identical_pair", 0, t, 1,
                                     reconstruct_group(ctx, {fused}, seed)[0], gt_t, ctx.tau)};
      SweepRow jrm{"align", c, rot_deg[c], trans, 0.0, 0,
                   detail::make_row(s, "jrm", "identical_pair", 0, t, 2,
                                    reconstruct_group(ctx, {obs_t, obs_s}, seed)[0], gt_t, ctx.tau)};
      per[i].push_back(std::move(base));
      per[i].push_back(std::move(jrm));
    }
  });
  std::vector<SweepRow> rows;
  for (auto& p : per) rows.insert(rows.end(), p.begin(), p.end());
  return rows;
}

/// Matching-error cells of the temporal one-rescan setting: 0 and 2..max_wrong
/// targets re-paired by a derangement (a single wrong pair is impossible when
/// every source is matched). Each scene contributes one row per target.
inline std::vector<std::size_t> match_sweep_cells(std::size_t max_wrong) {
  std::vector<std::size_t> cells{0};
  for (std::size_t w = 2; w <= max_wrong; ++w) cells.push_back(w);
  return cells;
}

inline std::vector<SweepRow> sweep_matching(const EvalContext& ctx,
                                            const std::vector<BenchScene>& scenes,
                                            std::size_t max_wrong, std::size_t threads) {
  const auto cells = match_sweep_cells(max_wrong);
  std::vector<std::vector<SweepRow>> per(scenes.size());
  parallel_for(scenes.size(), threads, [&](std::size_t i) {
    const BenchScene& s = scenes[i];
    if (s.arrangements.size() < 2) throw InputError("match sweep needs rescans");
    const Matching oracle = s.matching_table(1);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (cells[c] > oracle.pairs.size()) continue;
      const Matching m = corrupt_matching(oracle, cells[c], mix_seed(ctx.seed, 0x3A7, s.id * 64 + c),
                                          s.instance_count());
      for (const auto& [t, src] : m.pairs) {
        const PointSet obs_t = s.local_observation(0, t), obs_s = s.local_observation(1, src);
        const PointSet gt_t = s.local_ground_truth(0, t);
        const std::uint64_t seed = cell_seed(target_seed(ctx, s.id, t), c);
        const PointSet fused = fuse_observations(obs_t, {obs_s}, {RigidTransform::identity()});
        per[i].push_back({"match", c, 0.0, 0.0, 0.0, cells[c],
                          detail::make_row(s, "fm_align", "rescans_1", 0, t, 1,
                                           reconstruct_group(ctx, {fused}, seed)[0], gt_t, ctx.tau)});
        per[i].push_back({"match", c, 0.0, 0.0, 0.0, cells[c],
                          detail::make_row(s, "jrm", "rescans_1", 0, t, 2,
                                           reconstruct_group(ctx, {obs_t, obs_s}, seed)[0], gt_t,
                                           ctx.tau)});
      }
    }
  });
  std::vector<SweepRow> rows;
  for (auto& p : per) rows.insert(rows.end(), p.begin(), p.end());
  return rows;
}

/// Spatial pairs for one negative-ratio model.
inline std::vector<SweepRow> sweep_negratio_cell(const EvalContext& ctx,
                                                 const std::vector<BenchScene>& scenes,
                                                 std::size_t cell, double ratio,
                                                 std::size_t threads) {
  std::vector<SweepRow> rows;
  for (EvalRow& r : evaluate_benchmark(ctx, scenes, threads))
    if (r.method == "jrm") rows.push_back({"negratio", cell, 0.0, 0.0, ratio, 0, std::move(r)});
  return rows;
}

// ---------------------------------------------------------------------------
// Aggregation: rows are averaged within a scene first, then across scenes.

struct CellStat {
  double mean = 0.0;
  double se = 0.0;  // standard error over scenes
  std::size_t scenes = 0;
};

template <typename Row, typename Value>
CellStat per_scene_stat(const std::vector<const Row*>& rows, Value value) {
  std::map<std::size_t, std::pair<double, std::size_t>> by_scene;
  for (const Row* r : rows) {
    auto& acc = by_scene[r->scene];
    acc.first += value(*r);
    ++acc.second;
  }
  CellStat st;
  st.scenes = by_scene.size();
  if (st.scenes == 0) return st;
  std::vector<double> means;
  for (const auto& [id, acc] : by_scene) means.push_back(acc.first / static_cast<double>(acc.second));
  for (double m : means) st.mean += m;
  st.mean /= static_cast<double>(means.size());
  if (means.size() > 1) {
    double ss = 0.0;
    for (double m : means) ss += (m - st.mean) * (m - st.mean);
    st.se = std::sqrt(ss / static_cast<double>(means.size() - 1) / static_cast<double>(means.size()));
  }
  return st;
}

/// Per-scene mean CD for rows matching (method, condition).
inline std::map<std::size_t, double> scene_means(const std::vector<EvalRow>& rows,
                                                 const std::string& method,
                                                 const std::string& condition) {
  std::map<std::size_t, std::pair<double, std::size_t>> acc;
  for (const EvalRow& r : rows)
    if (r.method == method && r.condition == condition) {
      acc[r.scene].first += r.metrics.cd;
      ++acc[r.scene].second;
    }
  std::map<std::size_t, double> out;
  for (const auto& [id, a] : acc) out[id] = a.first / static_cast<double>(a.second);
  return out;
}

}  // namespace jrm
