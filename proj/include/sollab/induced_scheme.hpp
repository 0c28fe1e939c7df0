#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sollab/circle_map.hpp"

namespace sollab {

struct TruncationTooCoarse : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One element of the base partition A = {I_2..I_{d-1}} u {J_n, J'_n}.
// (a,b) are forward-circular endpoints; middles of odd-degree maps may
// cross the seam (a > b).
struct BaseElement {
  enum class Kind : std::uint8_t { Middle, J, JPrime };
  Kind kind;
  int index;   // n for J/J', ordinal for middles
  int branch;  // f-branch containing the element
  double a, b;
  int return_time;
  double length() const { return a <= b ? b - a : (0.5 - a) + (b + 0.5); }
};

std::vector<BaseElement> build_base_partition(const CircleMap& map, int n_max);

// A maximal interval of I_1 classified by the first-return refinement:
// either a closed Markov cell (f^{R*} maps it onto I_1, time = R*) or an
// open piece whose points are only known to satisfy R* > time.
struct Piece {
  double a = 0.0, b = 0.0;
  int root_n = 0;      // the J_n the piece starts in
  int tree_node = -1;  // itinerary handle into the root tree (-1: none)
  long time = 0;       // R* when closed, tau lower bound when open
  bool closed = false;
  double length() const { return b - a; }
};

struct TailSeries {
  std::vector<double> mass_R;      // Leb{R > n}
  std::vector<double> mass_Rstar;  // Leb{R* > n} (open pieces counted
                                   // when their bound certifies R* > n)
  double truncation_mass = 0.0;    // total open mass
};

struct SchemeReport {
  double beta_inv = 0.0;         // min sampled (f^R)' over base elements
  double distortion_C = 0.0;     // max constant in the per-chain bound
                                 // log((f^i)'x/(f^i)'y) <= C |f^i x - f^i y|/|J_{n-i}|
  double cell_min_deriv = 0.0;   // min sampled (f^{R*})' over closed cells
  double cell_distortion = 0.0;  // max |log (f^{R*})'(a)/(f^{R*})'(b)|,
                                 // deepest cells
  long gcd_rstar = 0;
  double p2_C = 1.0;     // vertical contraction constants of the skew
  double p2_beta = 0.1;  // product (exact for the linear fiber map)
};

struct CylinderCell {
  std::vector<std::pair<BaseElement::Kind, int>> itinerary;
  double a = 0.0, b = 0.0;
  std::vector<long> stopping_times;
  long r_star = 0;  // R* when closed, tau bound when open
  bool closed = false;
};

struct SchemeOptions {
  int n_max = 256;
  int max_time = 128;
  double min_len = 1e-12;
};

// First-return Markov structure of I_1: the partition P_0 with return
// time R*, built by breadth-first cylinder refinement with explicit
// truncation accounting. Enumeration runs the J_0-rooted itinerary tree
// once and transports it down the J_n chain by single inverse-branch
// steps, so deep roots cost one bisection per retained boundary.
class InducedScheme {
 public:
  InducedScheme(const CircleMap& map, SchemeOptions opt);

  const CircleMap& map() const { return map_; }
  const SchemeOptions& options() const { return opt_; }
  const BoundarySequences& bounds() const { return bounds_; }
  const std::vector<BaseElement>& middles() const { return middles_; }

  const std::vector<Piece>& pieces() const { return pieces_; }
  double truncation_mass() const { return truncation_mass_; }
  double base_length() const { return x0_; }  // |I_1|

  CylinderCell cell_info(size_t piece_index) const;

  // Forward branch steps of a piece's itinerary (one entry per f-step).
  std::vector<int> forward_steps(const Piece& p) const;

  TailSeries tails(int up_to) const;
  // Closed mass bucketed by R* (index r), for tower construction.
  std::vector<double> closed_mass_by_rstar() const;

  SchemeReport check_expansion_distortion(int samples, std::uint64_t seed) const;

  // Markov property residual: max over closed cells of the wrapped
  // distance of the long-double forward image of each endpoint to the
  // matching endpoint of I_1. Only meaningful when min_len is large
  // enough that the composite expansion does not amplify endpoint
  // rounding past the tolerance.
  double markov_residual() const;

  // Worst-case diameters of iterated refinement cylinders, for
  // k = 1..k_max. Circle-factor suprema are computed exactly over the
  // enumerated family (branch-and-bound over windowed refinements);
  // the returned value is scaled by the unstable-leaf slope factor and
  // carries the stable-direction remainder 2*(1/10)^k.
  std::vector<double> delta_k(int k_max) const;

  // Case-split diagnostics for a single closed cell (raw circle lengths,
  // no leaf-slope factor): delta0 is the unrefined part (empty when
  // k > R*-1), delta_windowed the refined part, delta_cell their max.
  double delta0_of_cell(size_t piece_index, int k) const;
  double delta_windowed_of_cell(size_t piece_index, int k) const;
  double delta_cell(size_t piece_index, int k) const;

  // Locate the closed piece containing x (interior of I_1); -1 if x
  // falls into an open piece. Used for separation-time estimates.
  long locate_piece(double x) const;
  // Separation time under the return map, capped.
  int separation_time(double x, double y, int cap) const;

  void write_tails_csv(const std::string& path, int up_to) const;
  void write_delta_csv(const std::string& path,
                       const std::vector<double>& deltas) const;

  static constexpr double kLeafSlopeBound = 3.490658503988659;  // pi/0.9
  // 3-D diameter of a leaf graph piece is at most (1+slope)*len; the
  // stable direction adds at most diam(D^2)*(1/10)^k.

 private:
  struct TreeNode {
    int parent = -1;
    BaseElement::Kind kind = BaseElement::Kind::J;
    int index = 0;
    long time = 0;
  };
  struct DeltaEntry {
    double len;
    int steps;      // steps remaining to the Markov arrival onto I_1
    int piece = -1; // owning piece
    int offset = 0; // forward steps already consumed
  };

  void build();
  void expand_root_tree();
  void expand_node(int node, double a, double b,
                   std::vector<std::pair<int, std::pair<double, double>>>& out);
  double pull_through_node(int node, double y) const;
  double pull_through_steps(const std::vector<int>& steps, double y) const;
  void relump(std::vector<double>& bnd, std::vector<Piece>& meta) const;
  std::vector<int> node_steps(int node) const;  // branch ids, forward order
  std::vector<int> remaining_steps(const Piece& p, int offset) const;
  double forward_len(const Piece& p, int offset, double* lo = nullptr,
                     double* hi = nullptr) const;
  // Fills per-steps maxima and, when `buckets` is set, the top-k lists
  // of refinable entries per steps value (larger entries dominate the
  // branch-and-bound, so only the leaders are kept).
  void gather_entries(int piece_filter,
                      std::vector<double>& maxlen_by_steps,
                      std::vector<std::vector<DeltaEntry>>* buckets,
                      int steps_cap) const;
  double search_delta(int k, const std::vector<DeltaEntry>& seeds,
                      const std::vector<double>& terminal_suffix,
                      const std::vector<double>& w_hat,
                      const std::vector<size_t>& cells_by_size,
                      double open_block_bound) const;

  CircleMap map_;
  SchemeOptions opt_;
  BoundarySequences bounds_;
  std::vector<BaseElement> middles_;
  std::vector<TreeNode> tree_;
  std::vector<Piece> pieces_;
  std::vector<size_t> root_begin_;  // size n_max+1
  double truncation_mass_ = 0.0;
  double x0_ = 0.5;
  double hole_cell_bound_ = 0.0;  // cap on cell sizes inside open pieces
};

}  // namespace sollab
