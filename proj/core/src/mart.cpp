#include "cforest/mart.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <string>

#include "cforest/detail/parallel.hpp"
#include "cforest/detail/rng.hpp"
#include "cforest/detail/text.hpp"
#include "cforest/errors.hpp"
#include "cforest/quantile_sketch.hpp"

namespace cforest {

void MartParams::validate() const {
  if (num_trees < 1) throw ConfigError("num_trees must be at least 1");
  if (max_depth < 1) throw ConfigError("max_depth must be at least 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning_rate must be positive and finite");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be non-negative");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be non-negative");
  if (!(min_child_weight >= 0.0) || !std::isfinite(min_child_weight))
    throw ConfigError("min_child_weight must be non-negative");
  if (!(feature_subsample > 0.0) || feature_subsample > 1.0)
    throw ConfigError("feature_subsample must lie in (0, 1]");
  if (max_bins < 2) throw ConfigError("max_bins must be at least 2");
  if (eps && (!(*eps >= 0.0) || *eps >= 0.5))
    throw ConfigError("eps must lie in [0, 0.5), got " + detail::format_double(*eps));
}

int Tree::route(std::span<const double> row) const {
  int idx = 0;
  while (!nodes[idx].is_leaf()) {
    const TreeNode& nd = nodes[idx];
    idx = row[nd.feature] <= nd.threshold ? nd.left : nd.right;
  }
  return idx;
}

void validate_tree(const Tree& tree) {
  const auto n = static_cast<std::int32_t>(tree.nodes.size());
  if (n == 0) throw DataError("tree has no nodes");
  std::vector<char> seen(tree.nodes.size(), 0);
  std::vector<std::int32_t> stack{0};
  std::int32_t visited = 0;
  while (!stack.empty()) {
    const std::int32_t idx = stack.back();
    stack.pop_back();
    if (idx < 0 || idx >= n) throw DataError("tree child index out of range");
    if (seen[idx]) throw DataError("tree node reached twice");
    seen[idx] = 1;
    ++visited;
    const TreeNode& nd = tree.nodes[idx];
    if (nd.is_leaf()) {
      if (nd.left != -1 || nd.right != -1) throw DataError("leaf with children");
      continue;
    }
    if (nd.left == nd.right) throw DataError("internal node with duplicate children");
    if (!(nd.gain > 0.0)) throw DataError("internal node with non-positive gain");
    if (!std::isfinite(nd.threshold)) throw DataError("non-finite threshold");
    stack.push_back(nd.right);
    stack.push_back(nd.left);
  }
  if (visited != n) throw DataError("unreachable tree nodes");
}

std::pair<double, double> logistic_grad_hess(int label, double margin) {
  const double p = 1.0 / (1.0 + std::exp(-margin));
  double h = p * (1.0 - p);
  if (h < 1e-16) h = 1e-16;
  return {p - static_cast<double>(label), h};
}

double split_gain(double g_left, double h_left, double g_right, double h_right, double lambda,
                  double gamma) {
  const double g_all = g_left + g_right;
  const double h_all = h_left + h_right;
  return 0.5 * (g_left * g_left / (h_left + lambda) + g_right * g_right / (h_right + lambda) -
                g_all * g_all / (h_all + lambda)) -
         gamma;
}

std::size_t BinnedDataset::max_bin_count() const {
  std::size_t widest = 0;
  for (const auto& th : thresholds_) widest = std::max(widest, th.size() + 1);
  return widest;
}

BinnedDataset BinnedDataset::build(const MatrixView& x, std::span<const std::size_t> rows,
                                   std::span<const double> weights, int max_bins, double eps,
                                   int threads) {
  if (max_bins < 2) throw ConfigError("max_bins must be at least 2");
  if (weights.size() != x.rows) throw DataError("weight count does not match row count");
  BinnedDataset out;
  out.rows_ = rows.size();
  out.thresholds_.resize(x.cols);
  out.bins_.resize(x.cols);
  const std::size_t m = rows.size();
  // Contiguous shards sketched independently and merged; the shard count is a
  // pure function of the subset size so rebuilds bind identically.
  const std::size_t shards = 1 + std::min<std::size_t>(7, m / 4096);

  detail::parallel_for(x.cols, threads, [&](std::size_t f) {
    std::vector<double> col(m), w(m);
    for (std::size_t i = 0; i < m; ++i) {
      col[i] = x.at(rows[i], f);
      w[i] = weights[rows[i]];
    }
    QuantileSketch sk;
    for (std::size_t s = 0; s < shards; ++s) {
      const std::size_t lo = m * s / shards;
      const std::size_t hi = m * (s + 1) / shards;
      QuantileSketch piece = QuantileSketch::build(
          std::span<const double>(col).subspan(lo, hi - lo),
          std::span<const double>(w).subspan(lo, hi - lo), eps);
      sk = s == 0 ? std::move(piece) : QuantileSketch::merge(sk, piece);
    }
    auto th = sk.split_candidates(max_bins);
    if (th.size() > 65534)
      throw DataError("feature " + std::to_string(f) + " has too many bins for binned training");
    std::vector<std::uint16_t> bins(m);
    for (std::size_t i = 0; i < m; ++i) {
      bins[i] = static_cast<std::uint16_t>(
          std::lower_bound(th.begin(), th.end(), col[i]) - th.begin());
    }
    out.thresholds_[f] = std::move(th);
    out.bins_[f] = std::move(bins);
  });
  return out;
}

BinnedDataset BinnedDataset::build_exhaustive(const MatrixView& x,
                                              std::span<const std::size_t> rows,
                                              std::span<const double> weights, int threads) {
  return build(x, rows, weights, std::numeric_limits<int>::max(), 0.0, threads);
}

namespace {

struct ScanBest {
  bool found = false;
  std::size_t feature = 0;
  int bin = -1;
  double threshold = 0.0;
  double gain = 0.0;
  double g_left = 0.0;
  double h_left = 0.0;
};

// Walks one feature's histogram in threshold order. parent_term is the
// node's own score G^2 / (H + lambda), hoisted out of the candidate loop.
// Strict improvement keeps the incumbent on ties, so the lowest feature and
// then the lowest threshold win.
void scan_feature(const double* hist, std::span<const double> thresholds, std::size_t feature,
                  double g_total, double h_total, double parent_term, const MartParams& p,
                  ScanBest& best) {
  double gl = 0.0;
  double hl = 0.0;
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    gl += hist[2 * t];
    hl += hist[2 * t + 1];
    if (hl <= 0.0 || hl < p.min_child_weight) continue;
    const double hr = h_total - hl;
    if (hr <= 0.0 || hr < p.min_child_weight) break;  // hr only shrinks from here
    const double gr = g_total - gl;
    const double gain =
        0.5 * (gl * gl / (hl + p.lambda) + gr * gr / (hr + p.lambda) - parent_term) - p.gamma;
    if (gain > best.gain) {
      best.found = true;
      best.feature = feature;
      best.bin = static_cast<int>(t);
      best.threshold = thresholds[t];
      best.gain = gain;
      best.g_left = gl;
      best.h_left = hl;
    }
  }
}

// Reusable fixed-stride histogram buffers, one live slot per tree depth.
class HistPool {
 public:
  HistPool(std::size_t features, std::size_t stride) : words_(features * stride * 2) {}

  int acquire() {
    int slot;
    if (!free_.empty()) {
      slot = free_.back();
      free_.pop_back();
    } else {
      slot = static_cast<int>(slots_.size());
      slots_.emplace_back(words_);
    }
    std::fill(slots_[slot].begin(), slots_[slot].end(), 0.0);
    return slot;
  }

  void release(int slot) { free_.push_back(slot); }
  double* data(int slot) { return slots_[slot].data(); }
  std::size_t words() const { return words_; }

 private:
  std::size_t words_;
  std::vector<std::vector<double>> slots_;
  std::vector<int> free_;
};

struct GrowScratch {
  std::vector<std::uint32_t> order;
  std::vector<std::uint32_t> left_buf;
  std::vector<std::uint32_t> right_buf;
};

void build_hist(const BinnedDataset& binned, std::span<const std::size_t> mask,
                std::size_t stride, const std::uint32_t* begin, const std::uint32_t* end,
                std::span<const double> wg, std::span<const double> wh, double* hist,
                int threads) {
  detail::parallel_for(mask.size(), threads, [&](std::size_t s) {
    const std::uint16_t* bins = binned.bins(mask[s]).data();
    double* h = hist + s * stride * 2;
    for (const std::uint32_t* p = begin; p != end; ++p) {
      const std::uint32_t i = *p;
      h[2 * bins[i]] += wg[i];
      h[2 * bins[i] + 1] += wh[i];
    }
  });
}

struct Frame {
  std::int32_t node = 0;
  std::uint32_t begin = 0;
  std::uint32_t end = 0;
  int depth = 0;
  double g = 0.0;
  double h = 0.0;
  int hist_slot = -1;  // -1: node is a forced leaf, no histogram built
};

Tree grow_core(const BinnedDataset& binned, std::span<const double> wg,
               std::span<const double> wh, std::span<const std::size_t> mask,
               const MartParams& p, std::vector<std::int32_t>* leaf_of, GrowScratch& scratch,
               int threads) {
  const std::size_t m = binned.rows();
  Tree tree;
  tree.nodes.emplace_back();

  scratch.order.resize(m);
  std::iota(scratch.order.begin(), scratch.order.end(), 0u);
  scratch.left_buf.resize(m);
  scratch.right_buf.resize(m);
  if (leaf_of) leaf_of->assign(m, 0);

  double g_root = 0.0, h_root = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    g_root += wg[i];
    h_root += wh[i];
  }

  std::size_t stride = 1;
  for (auto f : mask) stride = std::max(stride, binned.thresholds(f).size() + 1);
  HistPool pool(mask.size(), stride);

  auto finalize_leaf = [&](const Frame& fr) {
    tree.nodes[fr.node].value = -fr.g / (fr.h + p.lambda);
    if (leaf_of) {
      for (std::uint32_t i = fr.begin; i < fr.end; ++i)
        (*leaf_of)[scratch.order[i]] = fr.node;
    }
    if (fr.hist_slot >= 0) pool.release(fr.hist_slot);
  };

  std::vector<Frame> stack;
  Frame root{0, 0, static_cast<std::uint32_t>(m), 0, g_root, h_root, -1};
  if (p.max_depth >= 1 && m >= 2 && !mask.empty()) {
    root.hist_slot = pool.acquire();
    build_hist(binned, mask, stride, scratch.order.data(), scratch.order.data() + m, wg, wh,
               pool.data(root.hist_slot), threads);
  }
  stack.push_back(root);

  while (!stack.empty()) {
    Frame fr = stack.back();
    stack.pop_back();
    if (fr.hist_slot < 0) {
      finalize_leaf(fr);
      continue;
    }

    const double parent_term = fr.g * fr.g / (fr.h + p.lambda);
    std::vector<ScanBest> per_feature(mask.size());
    double* hist = pool.data(fr.hist_slot);
    detail::parallel_for(mask.size(), threads, [&](std::size_t s) {
      scan_feature(hist + s * stride * 2, binned.thresholds(mask[s]), mask[s], fr.g, fr.h,
                   parent_term, p, per_feature[s]);
    });
    ScanBest best;
    for (const auto& cand : per_feature) {
      if (cand.found && cand.gain > best.gain) best = cand;
    }
    if (!best.found) {
      finalize_leaf(fr);
      continue;
    }

    // Partition the node's positions; relative order is preserved so later
    // histogram accumulation stays in a deterministic order.
    const std::uint16_t* bins = binned.bins(best.feature).data();
    std::size_t nl = 0, nr = 0;
    for (std::uint32_t i = fr.begin; i < fr.end; ++i) {
      const std::uint32_t pos = scratch.order[i];
      if (bins[pos] <= best.bin) {
        scratch.left_buf[nl++] = pos;
      } else {
        scratch.right_buf[nr++] = pos;
      }
    }
    std::memcpy(scratch.order.data() + fr.begin, scratch.left_buf.data(),
                nl * sizeof(std::uint32_t));
    std::memcpy(scratch.order.data() + fr.begin + nl, scratch.right_buf.data(),
                nr * sizeof(std::uint32_t));

    const auto left_id = static_cast<std::int32_t>(tree.nodes.size());
    const auto right_id = left_id + 1;
    TreeNode& nd = tree.nodes[fr.node];
    nd.feature = static_cast<std::int32_t>(best.feature);
    nd.threshold = best.threshold;
    nd.gain = best.gain;
    nd.left = left_id;
    nd.right = right_id;
    nd.value = 0.0;
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();

    Frame left{left_id, fr.begin, static_cast<std::uint32_t>(fr.begin + nl), fr.depth + 1,
               best.g_left, best.h_left, -1};
    Frame right{right_id, static_cast<std::uint32_t>(fr.begin + nl), fr.end, fr.depth + 1,
                fr.g - best.g_left, fr.h - best.h_left, -1};

    const bool left_wants = left.depth < p.max_depth && nl >= 2;
    const bool right_wants = right.depth < p.max_depth && nr >= 2;
    if (left_wants && right_wants) {
      // Build the smaller side, derive the larger by subtraction from the
      // parent histogram in place.
      Frame& small = nl <= nr ? left : right;
      Frame& large = nl <= nr ? right : left;
      small.hist_slot = pool.acquire();
      build_hist(binned, mask, stride, scratch.order.data() + small.begin,
                 scratch.order.data() + small.end, wg, wh, pool.data(small.hist_slot), threads);
      double* parent_hist = pool.data(fr.hist_slot);
      const double* small_hist = pool.data(small.hist_slot);
      for (std::size_t k = 0; k < pool.words(); ++k) parent_hist[k] -= small_hist[k];
      large.hist_slot = fr.hist_slot;
    } else if (left_wants || right_wants) {
      Frame& only = left_wants ? left : right;
      only.hist_slot = pool.acquire();
      build_hist(binned, mask, stride, scratch.order.data() + only.begin,
                 scratch.order.data() + only.end, wg, wh, pool.data(only.hist_slot), threads);
      pool.release(fr.hist_slot);
    } else {
      pool.release(fr.hist_slot);
    }

    stack.push_back(right);
    stack.push_back(left);
  }
  return tree;
}

std::vector<std::size_t> subsample_mask(std::size_t d, const MartParams& p, int tree_index) {
  std::size_t count =
      static_cast<std::size_t>(std::llround(p.feature_subsample * static_cast<double>(d)));
  count = std::clamp<std::size_t>(count, 1, d);
  if (count == d) {
    std::vector<std::size_t> all(d);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  detail::Rng rng(detail::mix_seed(p.seed, 0xfea7u, static_cast<std::uint64_t>(tree_index)));
  return rng.sample_indices(d, count);
}

MartModel train_core(const MatrixView& x, std::span<const std::uint8_t> labels,
                     std::span<const double> weights, std::span<const std::size_t> rows,
                     const MartParams& p, int threads, bool exhaustive) {
  p.validate();
  if (labels.size() != x.rows) throw DataError("label count does not match row count");
  if (weights.size() != x.rows) throw DataError("weight count does not match row count");
  if (rows.empty()) throw DataError("training requires at least one row");
  if (x.cols == 0) throw DataError("training requires at least one feature");

  const std::size_t m = rows.size();
  std::vector<std::uint8_t> y(m);
  std::vector<double> w(m);
  double w_pos = 0.0, w_all = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    y[i] = labels[rows[i]];
    w[i] = weights[rows[i]];
    w_all += w[i];
    if (y[i]) w_pos += w[i];
  }
  if (w_pos <= 0.0 || w_pos >= w_all)
    throw DataError("training data contains a single class");

  BinnedDataset binned =
      exhaustive ? BinnedDataset::build_exhaustive(x, rows, weights, threads)
                 : BinnedDataset::build(x, rows, weights, p.max_bins, p.effective_eps(), threads);

  MartModel model;
  model.params = p;
  model.num_features = x.cols;
  model.base_score = std::log(w_pos / (w_all - w_pos));
  model.trees.reserve(p.num_trees);

  std::vector<double> margins(m, model.base_score);
  std::vector<double> wg(m), wh(m);
  std::vector<std::int32_t> leaf_of(m);
  GrowScratch scratch;

  for (int t = 0; t < p.num_trees; ++t) {
    for (std::size_t i = 0; i < m; ++i) {
      auto [g, h] = logistic_grad_hess(y[i], margins[i]);
      wg[i] = w[i] * g;
      wh[i] = w[i] * h;
    }
    auto mask = subsample_mask(x.cols, p, t);
    Tree tree = grow_core(binned, wg, wh, mask, p, &leaf_of, scratch, threads);
    for (std::size_t i = 0; i < m; ++i)
      margins[i] += p.learning_rate * tree.nodes[leaf_of[i]].value;
    model.trees.push_back(std::move(tree));
  }
  return model;
}

std::vector<std::size_t> identity_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

}  // namespace

std::optional<SplitDecision> find_best_split(const BinnedDataset& binned,
                                             std::span<const std::uint32_t> positions,
                                             std::span<const double> g, std::span<const double> h,
                                             std::span<const double> w, const MartParams& params,
                                             std::span<const std::size_t> feature_mask) {
  params.validate();
  const std::size_t m = binned.rows();
  if (g.size() != m || h.size() != m || w.size() != m)
    throw DataError("gradient arrays do not match the binned row count");

  std::vector<std::size_t> all;
  if (feature_mask.empty()) {
    all = identity_rows(binned.num_features());
    feature_mask = all;
  }

  double g_total = 0.0, h_total = 0.0;
  for (auto i : positions) {
    g_total += w[i] * g[i];
    h_total += w[i] * h[i];
  }
  const double parent_term = g_total * g_total / (h_total + params.lambda);

  ScanBest best;
  std::vector<double> hist;
  for (auto f : feature_mask) {
    const auto thresholds = binned.thresholds(f);
    if (thresholds.empty()) continue;
    hist.assign((thresholds.size() + 1) * 2, 0.0);
    const std::uint16_t* bins = binned.bins(f).data();
    for (auto i : positions) {
      hist[2 * bins[i]] += w[i] * g[i];
      hist[2 * bins[i] + 1] += w[i] * h[i];
    }
    scan_feature(hist.data(), thresholds, f, g_total, h_total, parent_term, params, best);
  }
  if (!best.found) return std::nullopt;
  return SplitDecision{best.feature, best.threshold, best.bin, best.gain};
}

Tree grow_tree(const BinnedDataset& binned, std::span<const double> g, std::span<const double> h,
               std::span<const double> w, const MartParams& params,
               std::span<const std::size_t> feature_mask) {
  params.validate();
  const std::size_t m = binned.rows();
  if (g.size() != m || h.size() != m || w.size() != m)
    throw DataError("gradient arrays do not match the binned row count");
  std::vector<double> wg(m), wh(m);
  for (std::size_t i = 0; i < m; ++i) {
    wg[i] = w[i] * g[i];
    wh[i] = w[i] * h[i];
  }
  std::vector<std::size_t> all;
  if (feature_mask.empty()) {
    all = identity_rows(binned.num_features());
    feature_mask = all;
  }
  GrowScratch scratch;
  return grow_core(binned, wg, wh, feature_mask, params, nullptr, scratch, 1);
}

MartModel train_mart(const MatrixView& x, std::span<const std::uint8_t> labels,
                     std::span<const double> weights, std::span<const std::size_t> rows,
                     const MartParams& params, int threads) {
  return train_core(x, labels, weights, rows, params, threads, false);
}

MartModel train_mart(const Dataset& ds, const MartParams& params, int threads) {
  auto rows = identity_rows(ds.rows());
  return train_core(ds.view(), ds.labels(), ds.weights(), rows, params, threads, false);
}

MartModel train_mart_exact(const Dataset& ds, const MartParams& params, int threads) {
  auto rows = identity_rows(ds.rows());
  return train_core(ds.view(), ds.labels(), ds.weights(), rows, params, threads, true);
}

std::vector<double> predict_margin(const MartModel& model, const MatrixView& x,
                                   std::span<const std::size_t> rows, int threads) {
  if (x.cols != model.num_features)
    throw DataError("feature width mismatch: model expects " +
                    std::to_string(model.num_features) + " columns, got " +
                    std::to_string(x.cols));
  std::vector<double> out(rows.size());
  detail::parallel_for(rows.size(), threads, [&](std::size_t k) {
    const auto row = x.row(rows[k]);
    double margin = model.base_score;
    for (const Tree& tree : model.trees) margin += model.params.learning_rate * tree.value_at(row);
    out[k] = margin;
  });
  return out;
}

std::vector<double> predict_margin(const MartModel& model, const MatrixView& x, int threads) {
  return predict_margin(model, x, identity_rows(x.rows), threads);
}

std::vector<double> predict_proba(const MartModel& model, const MatrixView& x,
                                  std::span<const std::size_t> rows, int threads) {
  auto out = predict_margin(model, x, rows, threads);
  for (auto& v : out) v = 1.0 / (1.0 + std::exp(-v));
  return out;
}

std::vector<double> predict_proba(const MartModel& model, const MatrixView& x, int threads) {
  return predict_proba(model, x, identity_rows(x.rows), threads);
}

std::vector<double> feature_importance(const MartModel& model) {
  std::vector<double> imp(model.num_features, 0.0);
  for (const Tree& tree : model.trees) {
    for (const TreeNode& nd : tree.nodes) {
      if (!nd.is_leaf()) imp[nd.feature] += nd.gain;
    }
  }
  if (!model.trees.empty()) {
    const double inv = 1.0 / static_cast<double>(model.trees.size());
    for (auto& v : imp) v *= inv;
  }
  return imp;
}

}  // namespace cforest
