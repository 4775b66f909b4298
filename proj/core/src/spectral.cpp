#include "flowcut/spectral.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "flowcut/errors.hpp"

namespace flowcut {

namespace {

// Normalized Laplacian L = I - D^-1/2 W D^-1/2 restricted to the complement
// of the trivial eigenvector z0 = D^1/2 1 / |D^1/2 1|.
class DeflatedLaplacian {
 public:
  explicit DeflatedLaplacian(const AffinityGraph& graph) : graph_(graph), n_(graph.size()) {
    const auto d = graph.degrees();
    sqrt_d_.resize(static_cast<Eigen::Index>(n_));
    inv_sqrt_d_.resize(static_cast<Eigen::Index>(n_));
    for (std::size_t i = 0; i < n_; ++i) {
      if (!(d[i] > 0.0) || !std::isfinite(d[i])) {
        throw ArgumentError("node " + std::to_string(i) + " has nonpositive degree");
      }
      sqrt_d_[static_cast<Eigen::Index>(i)] = std::sqrt(d[i]);
      inv_sqrt_d_[static_cast<Eigen::Index>(i)] = 1.0 / std::sqrt(d[i]);
    }
    z0_ = sqrt_d_ / sqrt_d_.norm();
    scratch_in_.resize(n_);
    scratch_out_.resize(n_);
  }

  void apply(const Eigen::VectorXd& x, Eigen::VectorXd& out) {
    for (std::size_t i = 0; i < n_; ++i) {
      scratch_in_[i] = inv_sqrt_d_[static_cast<Eigen::Index>(i)] * x[static_cast<Eigen::Index>(i)];
    }
    graph_.multiply(scratch_in_, scratch_out_);
    out.resize(static_cast<Eigen::Index>(n_));
    for (std::size_t i = 0; i < n_; ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      out[k] = x[k] - inv_sqrt_d_[k] * scratch_out_[i];
    }
    ++matvecs_;
  }

  void deflate(Eigen::VectorXd& v) const { v -= z0_.dot(v) * z0_; }

  // |(D - W) y - lambda D y| / |D y| for y = D^-1/2 x, given r = L x - lambda x.
  double generalized_residual(const Eigen::VectorXd& r, const Eigen::VectorXd& x) const {
    const double denom = sqrt_d_.cwiseProduct(x).norm();
    return denom > 0.0 ? sqrt_d_.cwiseProduct(r).norm() / denom : std::numeric_limits<double>::infinity();
  }

  const Eigen::VectorXd& inv_sqrt_d() const { return inv_sqrt_d_; }
  std::size_t matvecs() const { return matvecs_; }

 private:
  const AffinityGraph& graph_;
  std::size_t n_;
  Eigen::VectorXd sqrt_d_, inv_sqrt_d_, z0_;
  std::vector<double> scratch_in_, scratch_out_;
  std::size_t matvecs_ = 0;
};

Eigen::VectorXd start_vector(std::size_t n, std::uint64_t seed) {
  // mt19937_64 output is fully specified, unlike the <random> distributions.
  std::mt19937_64 gen(seed);
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v[i] = static_cast<double>(gen() >> 11) * 0x1.0p-53 - 0.5;
  }
  return v;
}

}  // namespace

SecondEigenpair solve_second_eigenpair(const AffinityGraph& graph, const EigenSolverOptions& options) {
  const std::size_t n = graph.size();
  if (n < 2) throw ArgumentError("eigensolver needs a graph with at least 2 nodes");
  if (!(options.tol > 0.0)) throw ArgumentError("eigensolver tolerance must be positive");

  DeflatedLaplacian op(graph);
  const std::size_t budget = options.max_matvecs ? options.max_matvecs : 10 * n;
  const std::size_t n_eff = n - 1;
  const std::size_t m = std::max<std::size_t>(1, std::min(n_eff, std::max<std::size_t>(options.max_basis, 2)));
  const std::size_t keep_max = std::min(options.kept_ritz, m > 1 ? m - 1 : 0);
  const auto N = static_cast<Eigen::Index>(n);

  Eigen::MatrixXd basis(N, static_cast<Eigen::Index>(m + 1));
  Eigen::MatrixXd projected = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));

  Eigen::VectorXd v = start_vector(n, options.start_seed);
  op.deflate(v);
  v.normalize();
  basis.col(0) = v;

  std::size_t first = 0;
  double best_residual = std::numeric_limits<double>::infinity();
  Eigen::VectorXd w, x, lx;

  while (true) {
    std::size_t size = first;
    double beta = 0.0;
    bool invariant = false;
    for (std::size_t j = first; j < m; ++j) {
      const auto J = static_cast<Eigen::Index>(j);
      op.apply(basis.col(J), w);
      // two passes of classical Gram-Schmidt against z0 and the whole basis;
      // rounding otherwise lets the trivial eigenvector grow back
      op.deflate(w);
      Eigen::VectorXd h = basis.leftCols(J + 1).transpose() * w;
      w.noalias() -= basis.leftCols(J + 1) * h;
      op.deflate(w);
      const Eigen::VectorXd h2 = basis.leftCols(J + 1).transpose() * w;
      w.noalias() -= basis.leftCols(J + 1) * h2;
      h += h2;
      projected.block(0, J, J + 1, 1) = h;
      projected.block(J, 0, 1, J + 1) = h.transpose();
      size = j + 1;
      beta = w.norm();
      if (beta <= 1e-12) {
        invariant = true;
        break;
      }
      basis.col(J + 1) = w / beta;
      if (j + 1 < m) {
        projected(J + 1, J) = beta;
        projected(J, J + 1) = beta;
      }
    }

    const auto S = static_cast<Eigen::Index>(size);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ritz(projected.topLeftCorner(S, S));
    if (ritz.info() != Eigen::Success) throw ConvergenceError("Rayleigh-Ritz step failed", best_residual);

    x = basis.leftCols(S) * ritz.eigenvectors().col(0);
    op.deflate(x);
    x.normalize();
    op.apply(x, lx);
    const double lambda = x.dot(lx);
    const Eigen::VectorXd r = lx - lambda * x;
    const double residual = op.generalized_residual(r, x);
    best_residual = std::min(best_residual, residual);

    if (residual <= options.tol) {
      SecondEigenpair out;
      out.eigenvalue = lambda;
      out.residual = residual;
      out.matvecs = op.matvecs();
      out.eigenvector.resize(n);
      std::size_t arg = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        out.eigenvector[i] = op.inv_sqrt_d()[k] * x[k];
        if (std::abs(out.eigenvector[i]) > std::abs(out.eigenvector[arg])) arg = i;
      }
      if (out.eigenvector[arg] < 0.0) {
        for (auto& value : out.eigenvector) value = -value;
      }
      return out;
    }
    if (invariant) {
      throw ConvergenceError("Krylov space became invariant above the residual tolerance", best_residual);
    }
    if (op.matvecs() >= budget) {
      throw ConvergenceError("eigensolver exceeded " + std::to_string(budget) + " matrix-vector products",
                             best_residual);
    }

    // thick restart: keep the smallest Ritz vectors plus the next Lanczos vector
    const std::size_t keep = std::min(keep_max, size - 1);
    const auto K = static_cast<Eigen::Index>(keep);
    const Eigen::MatrixXd kept = basis.leftCols(S) * ritz.eigenvectors().leftCols(K);
    const Eigen::VectorXd next = basis.col(S);
    basis.leftCols(K) = kept;
    basis.col(K) = next;
    projected.setZero();
    for (Eigen::Index i = 0; i < K; ++i) {
      projected(i, i) = ritz.eigenvalues()[i];
      const double coupling = beta * ritz.eigenvectors()(S - 1, i);
      projected(i, K) = coupling;
      projected(K, i) = coupling;
    }
    first = keep;
  }
}

Bipartition bipartition(std::span<const double> y) {
  if (y.empty()) throw ArgumentError("bipartition of an empty vector");
  Bipartition out;
  double sum = 0.0;
  for (double v : y) sum += v;
  out.mean = sum / static_cast<double>(y.size());
  out.labels.resize(y.size());
  std::size_t high = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    out.labels[i] = y[i] >= out.mean ? 1 : 0;
    high += out.labels[i];
  }
  out.degenerate = high == 0 || high == y.size();
  return out;
}

ForegroundDecision select_foreground(std::span<const double> y, std::span<const std::uint8_t> labels,
                                     GridShape grid, std::size_t corner_block) {
  if (y.size() != labels.size() || y.size() != grid.size() || y.empty()) {
    throw ShapeError("eigenvector, labels and grid disagree in size");
  }
  ForegroundDecision out;
  for (std::size_t i = 1; i < y.size(); ++i) {
    if (std::abs(y[i]) > std::abs(y[out.argmax_index])) out.argmax_index = i;
  }
  const std::uint8_t proposed = labels[out.argmax_index];

  const std::size_t bh = std::clamp<std::size_t>(corner_block, 1, grid.rows);
  const std::size_t bw = std::clamp<std::size_t>(corner_block, 1, grid.cols);
  const std::array<std::pair<std::size_t, std::size_t>, 4> origins{{
      {0, 0}, {0, grid.cols - bw}, {grid.rows - bh, 0}, {grid.rows - bh, grid.cols - bw}}};
  for (const auto& [r0, c0] : origins) {
    std::size_t high = 0;
    for (std::size_t r = r0; r < r0 + bh; ++r) {
      for (std::size_t c = c0; c < c0 + bw; ++c) high += labels[r * grid.cols + c];
    }
    const std::size_t low = bh * bw - high;
    if (2 * high > bh * bw) ++out.corners[1];
    if (2 * low > bh * bw) ++out.corners[0];
  }

  std::uint8_t side = proposed;
  if (out.corners[side] >= 2) {
    side = static_cast<std::uint8_t>(1 - side);
    out.swapped = true;
  }
  out.foreground_is_high_side = side == 1;
  out.foreground.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out.foreground[i] = labels[i] == side ? 1 : 0;
  return out;
}

double ncut_value(const AffinityGraph& graph, std::span<const std::uint8_t> labels) {
  const std::size_t n = graph.size();
  if (labels.size() != n) throw ShapeError("labels length differs from graph size");
  const auto d = graph.degrees();
  double cut = 0.0, assoc_p = 0.0, assoc_q = 0.0;
  std::size_t in_p = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i]) {
      ++in_p;
      assoc_p += d[i];
      for (std::size_t j = 0; j < n; ++j) {
        if (!labels[j]) cut += graph.weight(i, j);
      }
    } else {
      assoc_q += d[i];
    }
  }
  if (in_p == 0 || in_p == n) throw DegeneratePartition("Ncut needs both sides nonempty");
  return cut / assoc_p + cut / assoc_q;
}

GraphCutResult graph_cut(const AffinityGraph& graph, GridShape grid, const EigenSolverOptions& options,
                         std::size_t corner_block) {
  if (grid.size() != graph.size()) throw ShapeError("grid shape does not match graph size");
  GraphCutResult out;
  out.eigenpair = solve_second_eigenpair(graph, options);
  out.partition = bipartition(out.eigenpair.eigenvector);
  out.decision = select_foreground(out.eigenpair.eigenvector, out.partition.labels, grid, corner_block);
  if (!out.partition.degenerate) out.ncut = ncut_value(graph, out.partition.labels);
  return out;
}

}  // namespace flowcut
