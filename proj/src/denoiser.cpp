#include "p2pb/denoiser.hpp"

#include "p2pb/kdtree.hpp"
#include "p2pb/rng.hpp"

#include <cmath>

namespace p2pb {

namespace {

// Internals are row-major: edge rows are assembled and re-read row-wise.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const MatXX> param_mat(const VecX& values, const ParamLayout::Entry& e) {
  return {values.data() + e.offset, e.rows, e.cols};
}

Eigen::Map<MatXX> param_mat(VecX& values, const ParamLayout::Entry& e) {
  return {values.data() + e.offset, e.rows, e.cols};
}

struct BlockCache {
  RowMat h_in;             // N x C
  RowMat edge_in;          // (N*k) x (2C+3)
  RowMat act;              // (N*k) x W, post-ReLU
  std::vector<int> argmax; // N*W, winning neighbor slot per (point, channel)
};

struct ForwardCache {
  int n = 0;
  int k = 0;              // effective neighbor count, min(knn_k, N-1)
  std::vector<int> nbr;   // N*k global neighbor indices, (distance, index) order
  VecX embed;
  std::vector<BlockCache> blocks;
  RowMat h_final;         // N x W
  VecX pool;              // W, column-wise max of h_final
  std::vector<int> pool_arg;
  VecX gvec;              // W, pooled feature after the pool MLP
  MatX3 out;
};

std::vector<int> knn_graph(const MatX3& coords, int k_eff) {
  const int n = static_cast<int>(coords.rows());
  std::vector<int> nbr(static_cast<std::size_t>(n) * static_cast<std::size_t>(k_eff));
  if (k_eff == 0) {
    return nbr;
  }
  const KdTree tree(coords);
  std::vector<int> idx;
  std::vector<double> dist;
  for (int i = 0; i < n; ++i) {
    tree.knn(coords.row(i).transpose(), k_eff + 1, idx, dist);
    int written = 0;
    for (const int j : idx) {
      if (j == i) continue; // self
      if (written == k_eff) break;
      nbr[static_cast<std::size_t>(i) * k_eff + written] = j;
      ++written;
    }
  }
  return nbr;
}

void run_forward(const DenoiserParams& params, const DenoiserConfig& cfg,
                 const PointCloud& x_t, double t, ForwardCache& fc) {
  cfg.validate();
  if (x_t.feature_width() != cfg.feature_width) {
    throw std::invalid_argument("denoiser: feature width mismatch (config expects " +
                                std::to_string(cfg.feature_width) + ", cloud has " +
                                std::to_string(x_t.feature_width()) + ")");
  }
  if (params.values.size() != params.layout.total) {
    throw std::invalid_argument("denoiser: parameter vector does not match layout");
  }

  const int n = static_cast<int>(x_t.size());
  const int w = cfg.hidden_width;
  fc.n = n;
  fc.k = std::min(cfg.knn_k, n - 1);
  fc.nbr = knn_graph(x_t.coords, fc.k);
  fc.embed = time_embed(t, cfg.time_dim);
  fc.blocks.resize(static_cast<std::size_t>(cfg.num_blocks));

  RowMat h(n, 3 + cfg.feature_width);
  h.leftCols(3) = x_t.coords;
  if (cfg.feature_width > 0) {
    h.rightCols(cfg.feature_width) = x_t.features;
  }

  const int k = fc.k;
  for (int b = 0; b < cfg.num_blocks; ++b) {
    BlockCache& bc = fc.blocks[static_cast<std::size_t>(b)];
    const int c = static_cast<int>(h.cols());
    const std::string prefix = "block" + std::to_string(b) + ".";
    const auto edge_w = param_mat(params.values, params.layout.find(prefix + "edge_w"));
    const auto edge_b = param_mat(params.values, params.layout.find(prefix + "edge_b"));
    const auto time_w = param_mat(params.values, params.layout.find(prefix + "time_w"));
    const auto time_b = param_mat(params.values, params.layout.find(prefix + "time_b"));

    bc.h_in = h;
    bc.edge_in.resize(static_cast<Eigen::Index>(n) * k, 2 * c + 3);
    for (int i = 0; i < n; ++i) {
      for (int jj = 0; jj < k; ++jj) {
        const Eigen::Index r = static_cast<Eigen::Index>(i) * k + jj;
        const int j = fc.nbr[static_cast<std::size_t>(r)];
        bc.edge_in.block(r, 0, 1, c) = h.row(i);
        bc.edge_in.block(r, c, 1, c) = h.row(j) - h.row(i);
        bc.edge_in.block(r, 2 * c, 1, 3) = x_t.coords.row(j) - x_t.coords.row(i);
      }
    }

    if (k > 0) {
      bc.act.noalias() = bc.edge_in * edge_w.transpose();
      bc.act.rowwise() += edge_b.col(0).transpose();
      bc.act = bc.act.cwiseMax(0.0);
    }

    const VecX tproj = time_w * fc.embed + time_b.col(0);
    RowMat h_next(n, w);
    bc.argmax.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(w), -1);
    for (int i = 0; i < n; ++i) {
      for (int ch = 0; ch < w; ++ch) {
        if (k == 0) {
          h_next(i, ch) = tproj[ch];
          continue;
        }
        int best_jj = 0;
        double best = bc.act(static_cast<Eigen::Index>(i) * k, ch);
        for (int jj = 1; jj < k; ++jj) {
          const double v = bc.act(static_cast<Eigen::Index>(i) * k + jj, ch);
          // ties go to the lowest global neighbor index
          if (v > best ||
              (v == best && fc.nbr[static_cast<std::size_t>(i) * k + jj] <
                                fc.nbr[static_cast<std::size_t>(i) * k + best_jj])) {
            best = v;
            best_jj = jj;
          }
        }
        bc.argmax[static_cast<std::size_t>(i) * w + ch] = best_jj;
        h_next(i, ch) = best + tproj[ch];
      }
    }
    h = std::move(h_next);
  }

  fc.h_final = h;
  fc.pool.resize(w);
  fc.pool_arg.assign(static_cast<std::size_t>(w), 0);
  for (int ch = 0; ch < w; ++ch) {
    int best_i = 0;
    double best = fc.h_final(0, ch);
    for (int i = 1; i < n; ++i) {
      if (fc.h_final(i, ch) > best) {
        best = fc.h_final(i, ch);
        best_i = i;
      }
    }
    fc.pool[ch] = best;
    fc.pool_arg[static_cast<std::size_t>(ch)] = best_i;
  }

  const auto pool_w = param_mat(params.values, params.layout.find("pool_w"));
  const auto pool_b = param_mat(params.values, params.layout.find("pool_b"));
  const auto head_w = param_mat(params.values, params.layout.find("head_w"));
  const auto head_b = param_mat(params.values, params.layout.find("head_b"));

  fc.gvec = (pool_w * fc.pool + pool_b.col(0)).cwiseMax(0.0);

  const Eigen::RowVector3d offset =
      (head_w.rightCols(w) * fc.gvec + head_b.col(0)).transpose();
  fc.out.resize(n, 3);
  fc.out.noalias() = fc.h_final * head_w.leftCols(w).transpose();
  fc.out.rowwise() += offset;
}

} // namespace

void DenoiserConfig::validate() const {
  if (hidden_width < 1 || knn_k < 1 || num_blocks < 1) {
    throw std::invalid_argument("DenoiserConfig: width, k and blocks must be >= 1");
  }
  if (time_dim < 2 || time_dim % 2 != 0) {
    throw std::invalid_argument("DenoiserConfig: time_dim must be even and >= 2");
  }
  if (feature_width < 0) {
    throw std::invalid_argument("DenoiserConfig: feature_width must be >= 0");
  }
}

ParamLayout ParamLayout::make(const DenoiserConfig& cfg) {
  cfg.validate();
  ParamLayout layout;
  auto add = [&layout](std::string name, Eigen::Index rows, Eigen::Index cols) {
    layout.entries.push_back({std::move(name), layout.total, rows, cols});
    layout.total += rows * cols;
  };
  const Eigen::Index w = cfg.hidden_width;
  Eigen::Index c = 3 + cfg.feature_width;
  for (int b = 0; b < cfg.num_blocks; ++b) {
    const std::string prefix = "block" + std::to_string(b) + ".";
    add(prefix + "edge_w", w, 2 * c + 3);
    add(prefix + "edge_b", w, 1);
    add(prefix + "time_w", w, cfg.time_dim);
    add(prefix + "time_b", w, 1);
    c = w;
  }
  add("pool_w", w, w);
  add("pool_b", w, 1);
  add("head_w", 3, 2 * w);
  add("head_b", 3, 1);
  return layout;
}

const ParamLayout::Entry& ParamLayout::find(const std::string& name) const {
  for (const Entry& e : entries) {
    if (e.name == name) return e;
  }
  throw std::invalid_argument("ParamLayout: unknown entry '" + name + "'");
}

VecX time_embed(double t, int dim) {
  if (dim < 2 || dim % 2 != 0) {
    throw std::invalid_argument("time_embed: dim must be even and >= 2");
  }
  VecX out(dim);
  const int half = dim / 2;
  const double scaled = 1000.0 * t;
  for (int j = 0; j < half; ++j) {
    const double omega = std::pow(10000.0, -2.0 * j / static_cast<double>(dim));
    out[j] = std::sin(scaled * omega);
    out[half + j] = std::cos(scaled * omega);
  }
  return out;
}

DenoiserParams init_params(const DenoiserConfig& cfg, std::uint64_t seed) {
  DenoiserParams p;
  p.layout = ParamLayout::make(cfg);
  p.values = VecX::Zero(p.layout.total);
  Rng rng(seed);
  for (const ParamLayout::Entry& e : p.layout.entries) {
    const bool is_bias = e.cols == 1;
    const bool is_head = e.name == "head_w";
    if (is_bias || is_head) continue; // biases and the output head start at zero
    const double bound =
        std::sqrt(6.0 / static_cast<double>(e.rows + e.cols)); // Glorot uniform
    for (Eigen::Index i = 0; i < e.size(); ++i) {
      p.values[e.offset + i] = rng.uniform(-bound, bound);
    }
  }
  return p;
}

MatX3 denoiser_forward(const DenoiserParams& params, const DenoiserConfig& cfg,
                       const PointCloud& x_t, double t) {
  ForwardCache fc;
  run_forward(params, cfg, x_t, t, fc);
  return fc.out;
}

LossGrad denoiser_forward_backward(const DenoiserParams& params,
                                   const DenoiserConfig& cfg, const PointCloud& x_t,
                                   double t, const MatX3& target) {
  if (target.rows() != x_t.size()) {
    throw std::invalid_argument("denoiser_forward_backward: target shape mismatch");
  }
  ForwardCache fc;
  run_forward(params, cfg, x_t, t, fc);

  const int n = fc.n;
  const int k = fc.k;
  const int w = cfg.hidden_width;
  const double denom = 3.0 * static_cast<double>(n);

  LossGrad result;
  result.loss = (fc.out - target).squaredNorm() / denom;
  result.grad = VecX::Zero(params.layout.total);

  const MatX3 dout = (2.0 / denom) * (fc.out - target);
  const Vec3 dout_sum = dout.colwise().sum();

  const auto head_w = param_mat(params.values, params.layout.find("head_w"));
  const auto pool_w = param_mat(params.values, params.layout.find("pool_w"));

  {
    auto g_head_w = param_mat(result.grad, params.layout.find("head_w"));
    g_head_w.leftCols(w).noalias() = dout.transpose() * fc.h_final;
    g_head_w.rightCols(w).noalias() = dout_sum * fc.gvec.transpose();
    auto g_head_b = param_mat(result.grad, params.layout.find("head_b"));
    g_head_b.col(0) = dout_sum;
  }

  RowMat dh(n, w);
  dh.noalias() = dout * head_w.leftCols(w);

  {
    const VecX dg = head_w.rightCols(w).transpose() * dout_sum;
    const VecX dg_pre =
        (fc.gvec.array() > 0.0).select(dg.array(), 0.0).matrix();
    auto g_pool_w = param_mat(result.grad, params.layout.find("pool_w"));
    g_pool_w.noalias() = dg_pre * fc.pool.transpose();
    auto g_pool_b = param_mat(result.grad, params.layout.find("pool_b"));
    g_pool_b.col(0) = dg_pre;
    const VecX dpool = pool_w.transpose() * dg_pre;
    for (int ch = 0; ch < w; ++ch) {
      dh(fc.pool_arg[static_cast<std::size_t>(ch)], ch) += dpool[ch];
    }
  }

  for (int b = cfg.num_blocks - 1; b >= 0; --b) {
    const BlockCache& bc = fc.blocks[static_cast<std::size_t>(b)];
    const int c = static_cast<int>(bc.h_in.cols());
    const std::string prefix = "block" + std::to_string(b) + ".";
    const ParamLayout::Entry& edge_w_entry = params.layout.find(prefix + "edge_w");
    const RowMat edge_w_rm = param_mat(params.values, edge_w_entry); // row views below

    {
      const VecX dtb = dh.colwise().sum();
      auto g_time_w = param_mat(result.grad, params.layout.find(prefix + "time_w"));
      g_time_w.noalias() = dtb * fc.embed.transpose();
      auto g_time_b = param_mat(result.grad, params.layout.find(prefix + "time_b"));
      g_time_b.col(0) = dtb;
    }

    // Gradient flows through exactly one edge per (point, channel): the
    // max-pool winner, and only if its ReLU was active. Everything below
    // exploits that sparsity instead of materializing dense edge gradients.
    RowMat g_edge_w = RowMat::Zero(w, 2 * c + 3);
    VecX g_edge_b = VecX::Zero(w);
    RowMat dh_prev;
    if (b > 0) {
      dh_prev = RowMat::Zero(n, c);
    }
    for (int i = 0; i < n; ++i) {
      for (int ch = 0; ch < w; ++ch) {
        if (k == 0) break;
        const double val = dh(i, ch);
        if (val == 0.0) continue;
        const int jj = bc.argmax[static_cast<std::size_t>(i) * w + ch];
        const Eigen::Index r = static_cast<Eigen::Index>(i) * k + jj;
        if (!(bc.act(r, ch) > 0.0)) continue; // ReLU clamped
        g_edge_b[ch] += val;
        g_edge_w.row(ch) += val * bc.edge_in.row(r);
        if (b > 0) {
          const int j = fc.nbr[static_cast<std::size_t>(r)];
          const auto self_part = edge_w_rm.row(ch).segment(0, c);
          const auto diff_part = edge_w_rm.row(ch).segment(c, c);
          dh_prev.row(i) += val * (self_part - diff_part);
          dh_prev.row(j) += val * diff_part;
        }
      }
    }
    param_mat(result.grad, edge_w_entry) = g_edge_w;
    param_mat(result.grad, params.layout.find(prefix + "edge_b")).col(0) = g_edge_b;
    if (b > 0) {
      dh = std::move(dh_prev);
    }
  }

  return result;
}

} // namespace p2pb
