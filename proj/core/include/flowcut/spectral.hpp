#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "flowcut/affinity.hpp"

namespace flowcut {

struct GridShape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const noexcept { return rows * cols; }
};

struct EigenSolverOptions {
  double tol = 1e-8;              // relative residual |(D-W)y - l D y| / |D y|
  std::size_t max_matvecs = 0;    // 0 selects 10 * n
  std::size_t max_basis = 100;    // Krylov basis size between thick restarts
  std::size_t kept_ritz = 12;     // Ritz vectors retained on restart
  std::uint64_t start_seed = 0x5eed5eedULL;
};

struct SecondEigenpair {
  double eigenvalue = 0.0;
  std::vector<double> eigenvector;  // y, normalised so that y^T D y = 1
  double residual = 0.0;            // relative generalized residual
  std::size_t matvecs = 0;
};

/// Second-smallest eigenpair of (D - W) y = lambda D y.
///
/// Works on the normalized Laplacian L = I - D^-1/2 W D^-1/2 with the
/// trivial eigenvector D^1/2 1 projected out of every Krylov vector, so the
/// smallest remaining Ritz pair is the one sought. y = D^-1/2 z. The sign is
/// fixed so that the entry of largest magnitude is positive.
///
/// Throws ArgumentError for graphs with fewer than 2 nodes or a nonpositive
/// degree, ConvergenceError when the matvec budget is exhausted.
SecondEigenpair solve_second_eigenpair(const AffinityGraph& graph, const EigenSolverOptions& options = {});

struct Bipartition {
  double mean = 0.0;
  std::vector<std::uint8_t> labels;  // 1 where y >= mean
  bool degenerate = false;           // one side empty
};

Bipartition bipartition(std::span<const double> y);

struct ForegroundDecision {
  std::vector<std::uint8_t> foreground;
  bool foreground_is_high_side = true;
  std::size_t argmax_index = 0;           // patch with max |y|
  std::array<std::size_t, 2> corners{};   // corners occupied by {low, high} side
  bool swapped = false;                   // corner rule overrode the argmax side
};

/// Picks the foreground side: the side holding the largest |y| entry, unless
/// that side occupies two or more image corners, in which case the other
/// side. Corners are corner_block x corner_block patch blocks; a side
/// occupies a corner when it holds a strict majority of that block.
ForegroundDecision select_foreground(std::span<const double> y, std::span<const std::uint8_t> labels,
                                     GridShape grid, std::size_t corner_block = 1);

/// Ncut(P, Q) = cut(P,Q)/assoc(P,V) + cut(P,Q)/assoc(Q,V) with labels==1 as P.
/// Throws DegeneratePartition if either side is empty.
double ncut_value(const AffinityGraph& graph, std::span<const std::uint8_t> labels);

struct GraphCutResult {
  SecondEigenpair eigenpair;
  Bipartition partition;
  ForegroundDecision decision;
  double ncut = 0.0;  // 0 when the partition is degenerate
};

/// solve -> bipartition -> select_foreground -> ncut for one frame graph.
GraphCutResult graph_cut(const AffinityGraph& graph, GridShape grid, const EigenSolverOptions& options = {},
                         std::size_t corner_block = 1);

}  // namespace flowcut
