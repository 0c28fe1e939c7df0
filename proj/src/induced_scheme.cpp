#include "sollab/induced_scheme.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

#include "sollab/csv.hpp"
#include "sollab/rng.hpp"

namespace sollab {

namespace {
constexpr double kPruneDistortion = 8.0;  // headroom for branch-and-bound
constexpr long kSearchBudget = 400000;
}  // namespace

std::vector<BaseElement> build_base_partition(const CircleMap& map,
                                              int n_max) {
  if (n_max < 2) throw std::invalid_argument("n_max must be >= 2");
  const int d = map.degree();
  const BoundarySequences b = map.boundary_sequences(n_max);
  std::vector<BaseElement> out;
  // J_n descending into 0 from x0.
  for (int n = 0; n < n_max; ++n)
    out.push_back({BaseElement::Kind::J, n, 0, b.xs[n + 1], b.xs[n], n + 1});
  // Middle fundamental domains, ascending branch id.
  for (int br = 1; br < d - 1; ++br) {
    auto iv = map.branch_interval(br);
    out.push_back({BaseElement::Kind::Middle, br - 1, br, iv.first, iv.second, 1});
  }
  for (int n = 0; n < n_max; ++n)
    out.push_back({BaseElement::Kind::JPrime, n, d - 1, b.xs_prime[n],
                   b.xs_prime[n + 1], n + 1});
  return out;
}

InducedScheme::InducedScheme(const CircleMap& map, SchemeOptions opt)
    : map_(map), opt_(opt) {
  if (opt_.n_max < 2) throw std::invalid_argument("n_max must be >= 2");
  if (opt_.max_time < 2) throw std::invalid_argument("max_time must be >= 2");
  if (!(opt_.min_len > 0.0)) throw std::invalid_argument("min_len must be > 0");
  if (opt_.n_max < opt_.max_time)
    throw std::invalid_argument("n_max must be >= max_time");
  build();
}

void InducedScheme::build() {
  bounds_ = map_.boundary_sequences(opt_.n_max);
  x0_ = map_.x0();
  const int d = map_.degree();
  for (int br = 1; br < d - 1; ++br) {
    auto iv = map_.branch_interval(br);
    middles_.push_back(
        {BaseElement::Kind::Middle, br - 1, br, iv.first, iv.second, 1});
  }
  hole_cell_bound_ =
      std::max(bounds_.xs[opt_.n_max - 1] - bounds_.xs[opt_.n_max],
               2.0 * opt_.min_len);

  expand_root_tree();

  // Transport the J_0 structure down the chain: J_n pieces are the
  // branch-0 preimages of J_{n-1} pieces with all times shifted by one.
  long min_rstar0 = opt_.max_time + 1;
  size_t root0_count = pieces_.size();
  std::vector<double> bnd;
  std::vector<Piece> meta;
  bnd.reserve(root0_count + 1);
  meta.reserve(root0_count);
  for (const Piece& p : pieces_) {
    bnd.push_back(p.a);
    meta.push_back(p);
    if (p.closed) min_rstar0 = std::min(min_rstar0, p.time);
  }
  bnd.push_back(pieces_.back().b);

  root_begin_.assign(static_cast<size_t>(opt_.n_max) + 1, pieces_.size());
  root_begin_[0] = 0;
  for (int n = 1; n < opt_.n_max; ++n) {
    root_begin_[static_cast<size_t>(n)] = pieces_.size();
    if (n + min_rstar0 > opt_.max_time) {
      // every cell of this and deeper roots exceeds the time budget
      for (int j = n; j < opt_.n_max; ++j) {
        root_begin_[static_cast<size_t>(j)] = pieces_.size();
        Piece p;
        p.a = bounds_.xs[j + 1];
        p.b = bounds_.xs[j];
        p.root_n = j;
        p.tree_node = -1;
        p.time = j + 1;
        p.closed = false;
        pieces_.push_back(p);
      }
      break;
    }
    for (size_t i = 0; i < bnd.size(); ++i)
      bnd[i] = map_.preimage_in_base(bnd[i]);
    bnd.front() = bounds_.xs[n + 1];
    bnd.back() = bounds_.xs[n];
    for (size_t i = 0; i < meta.size(); ++i) {
      meta[i].time += 1;
      meta[i].root_n = n;
    }
    relump(bnd, meta);
    for (size_t i = 0; i < meta.size(); ++i) {
      Piece p = meta[i];
      p.a = bnd[i];
      p.b = bnd[i + 1];
      pieces_.push_back(p);
    }
  }
  root_begin_[static_cast<size_t>(opt_.n_max)] = pieces_.size();

  // The root-level hole (0, x_{n_max}): points there sit in J_j, j >=
  // n_max, so R* >= n_max + 2.
  Piece hole;
  hole.a = 0.0;
  hole.b = bounds_.xs[opt_.n_max];
  hole.root_n = opt_.n_max;
  hole.tree_node = -1;
  hole.time = opt_.n_max + 1;
  hole.closed = false;
  pieces_.push_back(hole);

  truncation_mass_ = 0.0;
  for (const Piece& p : pieces_)
    if (!p.closed) truncation_mass_ += p.length();
  if (truncation_mass_ > 0.1 * x0_)
    throw TruncationTooCoarse(
        "open mass exceeds 10% of |I_1|; raise max_time/n_max");
}

void InducedScheme::expand_root_tree() {
  tree_.push_back({-1, BaseElement::Kind::J, 0, 1});
  std::vector<std::pair<int, std::pair<double, double>>> queue;
  queue.push_back({0, {bounds_.xs[1], bounds_.xs[0]}});
  std::vector<std::pair<int, std::pair<double, double>>> children;
  while (!queue.empty()) {
    auto [node, iv] = queue.back();
    queue.pop_back();
    children.clear();
    expand_node(node, iv.first, iv.second, children);
    for (auto& c : children) queue.push_back(c);
  }
  std::sort(pieces_.begin(), pieces_.end(),
            [](const Piece& l, const Piece& r) { return l.a < r.a; });
  if (pieces_.empty())
    throw TruncationTooCoarse("no pieces produced for the root cell");
}

void InducedScheme::expand_node(
    int node, double a, double b,
    std::vector<std::pair<int, std::pair<double, double>>>& out) {
  const TreeNode nd = tree_[static_cast<size_t>(node)];
  const bool from_j = nd.kind == BaseElement::Kind::J;
  const bool from_jp = nd.kind == BaseElement::Kind::JPrime;
  double cur = a;

  auto emit_closed = [&](double lo, double hi) {
    if (hi <= lo) return;
    Piece p;
    p.a = lo;
    p.b = hi;
    p.root_n = 0;
    p.tree_node = node;
    p.time = nd.time;
    p.closed = true;
    pieces_.push_back(p);
  };
  auto emit_open = [&](double lo, double hi, long tau) {
    if (hi <= lo) return;
    Piece p;
    p.a = lo;
    p.b = hi;
    p.root_n = 0;
    p.tree_node = node;
    p.time = tau;
    p.closed = false;
    pieces_.push_back(p);
  };

  // Arc walk in forward circular order. The image of the node under
  // f^{time} is exactly the full image arc of its last element, so the
  // arc start pulls back to `a` and the arc end to `b`.
  // 1. the closing part I_1 (images of J'-type and middle elements).
  if (!from_j) {
    const bool arc_is_i1_only = from_jp && middles_.empty();
    const double hi = arc_is_i1_only ? b : pull_through_node(node, x0_);
    emit_closed(cur, hi);
    cur = hi;
    if (arc_is_i1_only) return;
  }
  // 2. middle fundamental domains.
  for (size_t mi = 0; mi < middles_.size(); ++mi) {
    const bool last = from_jp && (mi + 1 == middles_.size());
    const double hi = last ? b : pull_through_node(node, middles_[mi].b);
    const double len = hi - cur;
    if (nd.time + 1 > opt_.max_time || len < opt_.min_len) {
      emit_open(cur, hi, nd.time);
    } else if (len > 0.0) {
      tree_.push_back({node, BaseElement::Kind::Middle,
                       static_cast<int>(mi), nd.time + 1});
      out.push_back({static_cast<int>(tree_.size()) - 1, {cur, hi}});
    }
    cur = hi;
  }
  if (from_jp) return;
  // 3. the J'_m range followed by the base hole, with suffix lumping:
  // once a child is below min_len or over the time budget, everything
  // closer to 0 joins one open piece.
  for (int m = 0; m < opt_.n_max; ++m) {
    const int r = m + 1;  // R on J'_m
    if (nd.time + r > opt_.max_time) {
      emit_open(cur, b, nd.time + r - 1);
      return;
    }
    const double hi = pull_through_node(node, bounds_.xs_prime[m + 1]);
    const double len = hi - cur;
    if (len < opt_.min_len) {
      emit_open(cur, b, nd.time + r - 1);
      return;
    }
    tree_.push_back({node, BaseElement::Kind::JPrime, m, nd.time + r});
    out.push_back({static_cast<int>(tree_.size()) - 1, {cur, hi}});
    cur = hi;
  }
  emit_open(cur, b, nd.time + opt_.n_max);
}

double InducedScheme::pull_through_node(int node, double y) const {
  if (y >= 0.5) y -= 1.0;  // seam representative of a boundary target
  for (int nd = node; nd >= 0; nd = tree_[static_cast<size_t>(nd)].parent) {
    const TreeNode& t = tree_[static_cast<size_t>(nd)];
    switch (t.kind) {
      case BaseElement::Kind::J:
        for (int i = 0; i <= t.index; ++i) y = map_.preimage_in_base(y);
        break;
      case BaseElement::Kind::JPrime:
        for (int i = 0; i <= t.index; ++i)
          y = map_.inverse_branch(map_.degree() - 1, y);
        break;
      case BaseElement::Kind::Middle:
        y = map_.inverse_branch(middles_[static_cast<size_t>(t.index)].branch,
                                y);
        break;
    }
  }
  return y;
}

double InducedScheme::pull_through_steps(const std::vector<int>& steps,
                                         double y) const {
  if (y >= 0.5) y -= 1.0;
  for (size_t i = steps.size(); i-- > 0;) {
    if (steps[i] == 0)
      y = map_.preimage_in_base(y);
    else
      y = map_.inverse_branch(steps[i], y);
  }
  return y;
}

void InducedScheme::relump(std::vector<double>& bnd,
                           std::vector<Piece>& meta) const {
  std::vector<double> nb;
  std::vector<Piece> nm;
  nb.reserve(bnd.size());
  nm.reserve(meta.size());
  nb.push_back(bnd.front());
  for (size_t i = 0; i < meta.size(); ++i) {
    Piece p = meta[i];
    const double len = bnd[i + 1] - bnd[i];
    if (len <= 0.0) continue;
    bool open = !p.closed;
    long tau = open ? p.time : p.time - 1;
    if (p.closed && (p.time > opt_.max_time || len < opt_.min_len)) {
      open = true;
      p.closed = false;
      p.time = tau;
      p.tree_node = -1;
    }
    if (open && !nm.empty() && !nm.back().closed) {
      nm.back().time = std::min(nm.back().time, p.time);
      nb.back() = bnd[i + 1];
      continue;
    }
    nm.push_back(p);
    nb.push_back(bnd[i + 1]);
  }
  bnd.swap(nb);
  meta.swap(nm);
}

std::vector<int> InducedScheme::node_steps(int node) const {
  std::vector<int> chain;
  for (int nd = node; nd >= 0; nd = tree_[static_cast<size_t>(nd)].parent)
    chain.push_back(nd);
  std::reverse(chain.begin(), chain.end());
  std::vector<int> steps;
  for (int nd : chain) {
    const TreeNode& t = tree_[static_cast<size_t>(nd)];
    switch (t.kind) {
      case BaseElement::Kind::J:
        steps.insert(steps.end(), static_cast<size_t>(t.index) + 1, 0);
        break;
      case BaseElement::Kind::JPrime:
        steps.insert(steps.end(), static_cast<size_t>(t.index) + 1,
                     map_.degree() - 1);
        break;
      case BaseElement::Kind::Middle:
        steps.push_back(middles_[static_cast<size_t>(t.index)].branch);
        break;
    }
  }
  return steps;
}

std::vector<int> InducedScheme::forward_steps(const Piece& p) const {
  std::vector<int> steps;
  if (p.tree_node < 0) {
    steps.assign(static_cast<size_t>(p.root_n) + 1, 0);
    return steps;
  }
  steps = node_steps(p.tree_node);
  // The tree is rooted at J_0; piece lives in J_{root_n}, which adds
  // root_n further branch-0 steps in front.
  steps.insert(steps.begin(), static_cast<size_t>(p.root_n), 0);
  return steps;
}

std::vector<int> InducedScheme::remaining_steps(const Piece& p,
                                                int offset) const {
  std::vector<int> s = forward_steps(p);
  s.erase(s.begin(), s.begin() + offset);
  return s;
}

CylinderCell InducedScheme::cell_info(size_t piece_index) const {
  const Piece& p = pieces_.at(piece_index);
  CylinderCell c;
  c.a = p.a;
  c.b = p.b;
  c.r_star = p.time;
  c.closed = p.closed;
  c.itinerary.push_back({BaseElement::Kind::J, p.root_n});
  long t = p.root_n + 1;
  c.stopping_times.push_back(t);
  if (p.tree_node >= 0) {
    std::vector<int> chain;
    for (int nd = p.tree_node; nd >= 0;
         nd = tree_[static_cast<size_t>(nd)].parent)
      chain.push_back(nd);
    std::reverse(chain.begin(), chain.end());
    for (size_t i = 1; i < chain.size(); ++i) {  // skip the J_0 root
      const TreeNode& tn = tree_[static_cast<size_t>(chain[i])];
      c.itinerary.push_back({tn.kind, tn.index});
      const int r = tn.kind == BaseElement::Kind::Middle ? 1 : tn.index + 1;
      t += r;
      c.stopping_times.push_back(t);
    }
  }
  return c;
}

TailSeries InducedScheme::tails(int up_to) const {
  if (up_to > opt_.max_time)
    throw std::invalid_argument("tail query beyond max_time");
  TailSeries s;
  s.truncation_mass = truncation_mass_;
  s.mass_R.resize(static_cast<size_t>(up_to) + 1);
  s.mass_Rstar.assign(static_cast<size_t>(up_to) + 1, 0.0);
  s.mass_R[0] = 1.0;
  for (int n = 1; n <= up_to; ++n)
    s.mass_R[static_cast<size_t>(n)] = bounds_.xs[n] - bounds_.xs_prime[n];
  std::vector<double> closed_by_r(static_cast<size_t>(opt_.max_time) + 2, 0.0);
  std::vector<double> open_by_tau(static_cast<size_t>(up_to) + 2, 0.0);
  for (const Piece& p : pieces_) {
    if (p.closed) {
      closed_by_r[static_cast<size_t>(p.time)] += p.length();
    } else {
      const long tau = std::min<long>(p.time, up_to + 1);
      open_by_tau[static_cast<size_t>(tau)] += p.length();
    }
  }
  // mass{R* > n} = closed cells with R* > n plus open pieces certified
  // by tau >= n (their points satisfy R* >= tau + 1 > n).
  double closed_suffix = 0.0;
  for (size_t r = static_cast<size_t>(up_to) + 2; r < closed_by_r.size(); ++r)
    closed_suffix += closed_by_r[r];
  double open_ge = open_by_tau[static_cast<size_t>(up_to) + 1];
  for (int n = up_to; n >= 0; --n) {
    closed_suffix += closed_by_r[static_cast<size_t>(n) + 1];
    open_ge += open_by_tau[static_cast<size_t>(n)];
    s.mass_Rstar[static_cast<size_t>(n)] = closed_suffix + open_ge;
  }
  return s;
}

std::vector<double> InducedScheme::closed_mass_by_rstar() const {
  std::vector<double> m(static_cast<size_t>(opt_.max_time) + 1, 0.0);
  for (const Piece& p : pieces_)
    if (p.closed) m[static_cast<size_t>(p.time)] += p.length();
  return m;
}

SchemeReport InducedScheme::check_expansion_distortion(
    int samples, std::uint64_t seed) const {
  SchemeReport rep;
  Rng rng(seed);
  const int d = map_.degree();
  rep.p2_beta = 0.1;
  rep.p2_C = 1.0;

  // Base-element expansion (f^R)' and the per-chain distortion constant.
  double min_fr = 1e300;
  double max_c = 0.0;
  std::vector<int> ns;
  for (int n = 0; n < std::min(opt_.n_max, 96); ++n) ns.push_back(n);
  for (int n = 128; n < opt_.n_max; n *= 2) ns.push_back(n);
  for (int n : ns) {
    for (int s = 0; s < std::max(2, samples / 64); ++s) {
      double x = rng.uniform(bounds_.xs[n + 1], bounds_.xs[n]);
      double y = rng.uniform(bounds_.xs[n + 1], bounds_.xs[n]);
      double prod_x = 1.0, prod_y = 1.0;
      double fx = x, fy = y;
      for (int i = 0; i <= n; ++i) {
        // distortion bound applies to 1 <= i <= n along the chain
        if (i >= 1 && n >= 1) {
          const double num = std::fabs(std::log(prod_x / prod_y));
          const double den =
              std::fabs(fx - fy) /
              (bounds_.xs[n - i] - bounds_.xs[n - i + 1]);
          if (den > 1e-300) max_c = std::max(max_c, num / den);
        }
        prod_x *= map_.deriv(fx);
        prod_y *= map_.deriv(fy);
        fx = map_.eval(fx);
        fy = map_.eval(fy);
      }
      min_fr = std::min(min_fr, std::min(prod_x, prod_y));
      // mirror side
      double mx = -x;
      double prod_m = 1.0;
      for (int i = 0; i <= n; ++i) {
        prod_m *= map_.deriv(mx);
        mx = map_.eval(mx);
      }
      min_fr = std::min(min_fr, prod_m);
    }
  }
  for (const BaseElement& mid : middles_) {
    for (int s = 0; s < 8; ++s) {
      double x;
      if (mid.a < mid.b) {
        x = rng.uniform(mid.a, mid.b);
      } else {  // straddler
        const double len = mid.length();
        double t = rng.uniform(0.0, len);
        x = CircleMap::wrap(mid.a + t);
      }
      min_fr = std::min(min_fr, map_.deriv(x));
    }
  }
  rep.beta_inv = min_fr;
  rep.distortion_C = max_c;

  // Cell-level statistics.
  double min_cell = 1e300;
  long g = 0;
  size_t stride = std::max<size_t>(1, pieces_.size() / 20000);
  for (size_t i = 0; i < pieces_.size(); i += stride) {
    const Piece& p = pieces_[i];
    if (!p.closed) continue;
    double x = 0.5 * (p.a + p.b);
    double prod = 1.0;
    for (long s = 0; s < p.time; ++s) {
      prod *= map_.deriv(x);
      x = map_.eval(x);
    }
    min_cell = std::min(min_cell, prod);
  }
  for (const Piece& p : pieces_)
    if (p.closed) g = std::gcd(g, p.time);
  rep.cell_min_deriv = min_cell;
  rep.gcd_rstar = g;

  // Endpoint distortion of (f^{R*})' over the deepest cells.
  std::vector<size_t> idx;
  for (size_t i = 0; i < pieces_.size(); ++i)
    if (pieces_[i].closed) idx.push_back(i);
  std::sort(idx.begin(), idx.end(), [&](size_t l, size_t r) {
    return pieces_[l].time > pieces_[r].time;
  });
  if (idx.size() > 200) idx.resize(200);
  double max_cd = 0.0;
  for (size_t i : idx) {
    const Piece& p = pieces_[i];
    double xa = p.a, xb = p.b, pa = 1.0, pb = 1.0;
    for (long s = 0; s < p.time; ++s) {
      pa *= map_.deriv(xa);
      pb *= map_.deriv(xb);
      xa = map_.eval(xa);
      xb = map_.eval(xb);
    }
    max_cd = std::max(max_cd, std::fabs(std::log(pa / pb)));
  }
  rep.cell_distortion = max_cd;
  (void)d;
  return rep;
}

double InducedScheme::markov_residual() const {
  double worst = 0.0;
  for (const Piece& p : pieces_) {
    if (!p.closed) continue;
    long double xa = p.a, xb = p.b;
    for (long s = 0; s < p.time; ++s) {
      xa = map_.eval_ld(xa);
      xb = map_.eval_ld(xb);
    }
    const long double da = xa - floorl(xa + 0.5L);  // distance to 0 mod 1
    long double db = xb - static_cast<long double>(x0_);
    db = db - floorl(db + 0.5L);
    worst = std::max(worst, static_cast<double>(fabsl(da)));
    worst = std::max(worst, static_cast<double>(fabsl(db)));
  }
  return worst;
}

long InducedScheme::locate_piece(double x) const {
  if (!(x > 0.0 && x < bounds_.xs[0])) return -1;
  if (x < bounds_.xs[opt_.n_max]) return -1;  // root hole
  // find n with xs[n+1] <= x < xs[n] (xs decreasing)
  long lo = 0, hi = opt_.n_max;  // x in [xs[hi], xs[lo])
  while (hi - lo > 1) {
    const long mid = (lo + hi) / 2;
    if (x < bounds_.xs[mid])
      lo = mid;
    else
      hi = mid;
  }
  const long n = lo;
  size_t b = root_begin_[static_cast<size_t>(n)];
  size_t e = (static_cast<size_t>(n) + 1 < root_begin_.size())
                 ? root_begin_[static_cast<size_t>(n) + 1]
                 : pieces_.size();
  if (b >= e) return -1;
  long lo2 = static_cast<long>(b), hi2 = static_cast<long>(e);
  while (hi2 - lo2 > 1) {
    const long mid = (lo2 + hi2) / 2;
    if (pieces_[static_cast<size_t>(mid)].a <= x)
      lo2 = mid;
    else
      hi2 = mid;
  }
  const Piece& p = pieces_[static_cast<size_t>(lo2)];
  if (!(x >= p.a && x < p.b)) return -1;
  return p.closed ? lo2 : -1;
}

int InducedScheme::separation_time(double x, double y, int cap) const {
  for (int s = 0; s < cap; ++s) {
    const long px = locate_piece(x);
    const long py = locate_piece(y);
    if (px < 0 || py < 0) return s;
    if (px != py) return s;
    const long r = pieces_[static_cast<size_t>(px)].time;
    for (long i = 0; i < r; ++i) {
      x = map_.eval(x);
      y = map_.eval(y);
    }
  }
  return cap;
}

double InducedScheme::forward_len(const Piece& p, int offset, double* lo,
                                  double* hi) const {
  double a = p.a, b = p.b;
  for (int i = 0; i < offset; ++i) {
    a = map_.eval(a);
    b = map_.eval(b);
  }
  double len = b - a;
  if (len < 0.0) len += 1.0;  // piece crossed the seam
  if (lo) *lo = a;
  if (hi) *hi = b;
  return len;
}

void InducedScheme::gather_entries(
    int piece_filter, std::vector<double>& maxlen_by_steps,
    std::vector<std::vector<DeltaEntry>>* buckets, int steps_cap) const {
  const size_t over = maxlen_by_steps.size() - 1;
  constexpr size_t kKeep = 8;
  auto record = [&](double len, long steps, int piece, int offset) {
    const size_t s = static_cast<size_t>(
        std::min<long>(steps, static_cast<long>(over)));
    maxlen_by_steps[s] = std::max(maxlen_by_steps[s], len);
    if (!buckets || steps > steps_cap || steps < 1) return;
    auto& bucket = (*buckets)[static_cast<size_t>(steps)];
    if (bucket.size() == kKeep && bucket.back().len >= len) return;
    DeltaEntry e{len, static_cast<int>(steps), piece, offset};
    auto it = std::upper_bound(
        bucket.begin(), bucket.end(), e,
        [](const DeltaEntry& l, const DeltaEntry& r) { return l.len > r.len; });
    bucket.insert(it, e);
    if (bucket.size() > kKeep) bucket.pop_back();
  };
  for (size_t i = 0; i < pieces_.size(); ++i) {
    if (piece_filter >= 0 && static_cast<size_t>(piece_filter) != i) continue;
    const Piece& p = pieces_[i];
    if (!p.closed) continue;
    record(p.length(), p.time, static_cast<int>(i), 0);
    // Forward iterates inside the itinerary. In whole-family mode only
    // the J_0-rooted copies are walked: iterates of deeper roots first
    // traverse other stored pieces (already recorded) before joining
    // the same internal intervals.
    const bool walk = piece_filter >= 0 || p.root_n == 0;
    if (!walk) continue;
    double a = p.a, b = p.b;
    for (long l = 1; l < p.time; ++l) {
      a = map_.eval(a);
      b = map_.eval(b);
      double len = b - a;
      if (len < 0.0) len += 1.0;
      record(len, p.time - l, static_cast<int>(i), static_cast<int>(l));
    }
  }
}

double InducedScheme::search_delta(int k,
                                   const std::vector<DeltaEntry>& seeds,
                                   const std::vector<double>& terminal_suffix,
                                   const std::vector<double>& w_hat,
                                   const std::vector<size_t>& cells_by_size,
                                   double open_block_bound) const {
  double best =
      (k + 1 < static_cast<int>(terminal_suffix.size()))
          ? terminal_suffix[static_cast<size_t>(k) + 1]
          : 0.0;
  struct Node {
    double bound;
    double len;
    int window;
    int seed = -1;       // seed entry to materialize from
    std::vector<int> steps;  // set for internal nodes
    bool operator<(const Node& o) const { return bound < o.bound; }
  };
  auto w_bound = [&](double len, int w) {
    if (w <= 0) return len;
    const double via =
        len * w_hat[static_cast<size_t>(std::min<int>(
                  w, static_cast<int>(w_hat.size()) - 1))] *
        kPruneDistortion / x0_;
    return std::min(len, via);
  };
  std::priority_queue<Node> pq;
  for (size_t si = 0; si < seeds.size(); ++si) {
    const DeltaEntry& e = seeds[si];
    if (e.steps > k) continue;  // window would be <= 0: pure terminal
    const int w = k + 1 - e.steps;
    Node n;
    n.bound = w_bound(e.len, w);
    n.len = e.len;
    n.window = w;
    n.seed = static_cast<int>(si);
    if (n.bound > best) pq.push(std::move(n));
  }
  long work = 0;
  while (!pq.empty()) {
    Node n = pq.top();
    pq.pop();
    if (n.bound <= best * (1.0 + 1e-12)) break;
    if (++work > kSearchBudget)
      throw TruncationTooCoarse("delta_k refinement budget exhausted");
    std::vector<int> steps =
        n.seed >= 0
            ? remaining_steps(pieces_[static_cast<size_t>(seeds[static_cast<size_t>(n.seed)].piece)],
                              seeds[static_cast<size_t>(n.seed)].offset)
            : std::move(n.steps);
    for (size_t ci : cells_by_size) {
      const Piece& blk = pieces_[ci];
      if (n.len * blk.length() * kPruneDistortion / x0_ <= best) break;
      const double lo = pull_through_steps(steps, blk.a);
      const double hi = pull_through_steps(steps, blk.b);
      double len = hi - lo;
      if (len < 0.0) len += 1.0;
      const int w2 = n.window - static_cast<int>(blk.time);
      if (w2 <= 0) {
        best = std::max(best, len);
        continue;
      }
      Node c;
      c.bound = w_bound(len, w2);
      c.len = len;
      c.window = w2;
      c.seed = -1;
      if (c.bound > best) {
        c.steps = steps;
        const std::vector<int> bs = forward_steps(blk);
        c.steps.insert(c.steps.end(), bs.begin(), bs.end());
        pq.push(std::move(c));
      }
    }
    // guard: cylinders whose next block falls into unresolved open mass
    if (n.len * open_block_bound * kPruneDistortion / x0_ > best)
      throw TruncationTooCoarse("delta_k sup not certifiable at this depth");
  }
  return best;
}

std::vector<double> InducedScheme::delta_k(int k_max) const {
  if (k_max < 1) throw std::invalid_argument("k_max must be >= 1");
  if (opt_.max_time < k_max + 2)
    throw TruncationTooCoarse("max_time must be >= k_max + 2 for delta_k");

  std::vector<double> maxlen(static_cast<size_t>(k_max) + 3, 0.0);
  std::vector<std::vector<DeltaEntry>> buckets(
      static_cast<size_t>(k_max) + 1);
  gather_entries(-1, maxlen, &buckets, k_max);
  maxlen.back() = std::max(maxlen.back(), hole_cell_bound_);
  std::vector<double> terminal_suffix(maxlen.size() + 1, 0.0);
  for (size_t s = maxlen.size(); s-- > 0;)
    terminal_suffix[s] = std::max(terminal_suffix[s + 1], maxlen[s]);

  // Cylinder-size upper bounds W(w) by dynamic programming over the
  // first return block.
  std::vector<double> s_suffix(static_cast<size_t>(k_max) + 2, 0.0);
  std::vector<std::vector<size_t>> top_by_r(static_cast<size_t>(k_max) + 1);
  std::vector<size_t> cells_small;
  {
    std::vector<double> by_r(static_cast<size_t>(k_max) + 2, 0.0);
    for (size_t i = 0; i < pieces_.size(); ++i) {
      const Piece& p = pieces_[i];
      if (!p.closed) continue;
      const size_t r = static_cast<size_t>(
          std::min<long>(p.time, static_cast<long>(k_max) + 1));
      by_r[r] = std::max(by_r[r], p.length());
      if (p.time <= k_max) {
        cells_small.push_back(i);
        auto& top = top_by_r[static_cast<size_t>(p.time)];
        top.push_back(i);
        std::sort(top.begin(), top.end(), [&](size_t l, size_t rr) {
          return pieces_[l].length() > pieces_[rr].length();
        });
        if (top.size() > 4) top.pop_back();
      }
    }
    by_r[static_cast<size_t>(k_max) + 1] =
        std::max(by_r[static_cast<size_t>(k_max) + 1], hole_cell_bound_);
    double suf = 0.0;
    for (size_t r = by_r.size(); r-- > 0;) {
      suf = std::max(suf, by_r[r]);
      s_suffix[r] = suf;
    }
  }
  std::vector<double> m_r(static_cast<size_t>(k_max) + 1, 0.0);
  for (int r = 2; r <= k_max; ++r) {
    for (size_t i : top_by_r[static_cast<size_t>(r)]) {
      const Piece& p = pieces_[i];
      double xa = p.a, xb = p.b, pa = 1.0, pb = 1.0;
      for (long s = 0; s < p.time; ++s) {
        pa *= map_.deriv(xa);
        pb *= map_.deriv(xb);
        xa = map_.eval(xa);
        xb = map_.eval(xb);
      }
      const double ratio = pa > pb ? pa / pb : pb / pa;
      m_r[static_cast<size_t>(r)] =
          std::max(m_r[static_cast<size_t>(r)], p.length() * ratio * 2.0);
    }
  }
  std::vector<double> w_hat(static_cast<size_t>(k_max) + 1, 0.0);
  for (int w = 1; w <= k_max; ++w) {
    double v = s_suffix[static_cast<size_t>(w)];
    for (int r = 2; r < w; ++r)
      v = std::max(v, m_r[static_cast<size_t>(r)] *
                          w_hat[static_cast<size_t>(w - r)] / x0_);
    w_hat[static_cast<size_t>(w)] = v;
  }
  std::sort(cells_small.begin(), cells_small.end(), [&](size_t l, size_t r) {
    return pieces_[l].length() > pieces_[r].length();
  });

  std::vector<double> out(static_cast<size_t>(k_max) + 1, 0.0);
  const double slope_factor = 1.0 + kLeafSlopeBound;
  std::vector<DeltaEntry> seeds;
  for (int k = 1; k <= k_max; ++k) {
    seeds.clear();
    for (int s = 1; s <= k; ++s)
      for (const DeltaEntry& e : buckets[static_cast<size_t>(s)])
        seeds.push_back(e);
    const double sup = search_delta(k, seeds, terminal_suffix, w_hat,
                                    cells_small, hole_cell_bound_);
    out[static_cast<size_t>(k)] =
        slope_factor * sup + 2.0 * std::pow(0.1, k);
  }
  out[0] = slope_factor * x0_ + 2.0;
  return out;
}

double InducedScheme::delta0_of_cell(size_t piece_index, int k) const {
  const Piece& p = pieces_.at(piece_index);
  if (!p.closed) throw std::invalid_argument("open piece");
  double best = 0.0;
  double a = p.a, b = p.b;
  for (long l = 0; l < p.time; ++l) {
    const long steps = p.time - l;
    if (steps >= k + 1) {
      double len = b - a;
      if (len < 0.0) len += 1.0;
      best = std::max(best, len);
    }
    a = map_.eval(a);
    b = map_.eval(b);
  }
  return best;
}

double InducedScheme::delta_windowed_of_cell(size_t piece_index,
                                             int k) const {
  const Piece& p = pieces_.at(piece_index);
  if (!p.closed) throw std::invalid_argument("open piece");
  const int k_cap = std::max(k, static_cast<int>(p.time));
  std::vector<double> maxlen(static_cast<size_t>(k_cap) + 3, 0.0);
  std::vector<std::vector<DeltaEntry>> buckets(static_cast<size_t>(k) + 1);
  gather_entries(static_cast<int>(piece_index), maxlen, &buckets, k);
  std::vector<DeltaEntry> own;
  for (const auto& b : buckets)
    for (const DeltaEntry& e : b) own.push_back(e);
  // terminal contributions only come from this cell's own iterates
  std::vector<double> terminal_suffix(maxlen.size() + 1, 0.0);

  // Family-level blocks for the refinement.
  const int k_max = k;
  std::vector<double> s_suffix(static_cast<size_t>(k_max) + 2, 0.0);
  {
    std::vector<double> by_r(static_cast<size_t>(k_max) + 2, 0.0);
    for (const Piece& q : pieces_) {
      if (!q.closed) continue;
      const size_t r = static_cast<size_t>(
          std::min<long>(q.time, static_cast<long>(k_max) + 1));
      by_r[r] = std::max(by_r[r], q.length());
    }
    by_r.back() = std::max(by_r.back(), hole_cell_bound_);
    double suf = 0.0;
    for (size_t r = by_r.size(); r-- > 0;) {
      suf = std::max(suf, by_r[r]);
      s_suffix[r] = suf;
    }
  }
  std::vector<double> w_hat(static_cast<size_t>(k_max) + 1, 0.0);
  for (int w = 1; w <= k_max; ++w) {
    double v = s_suffix[static_cast<size_t>(w)];
    w_hat[static_cast<size_t>(w)] = v;  // coarse: first-block bound only
  }
  std::vector<size_t> cells;
  for (size_t i = 0; i < pieces_.size(); ++i)
    if (pieces_[i].closed && pieces_[i].time <= k_max) cells.push_back(i);
  std::sort(cells.begin(), cells.end(), [&](size_t l, size_t r) {
    return pieces_[l].length() > pieces_[r].length();
  });
  // diagnostic sup over the enumerated family only: no open-mass guard
  return search_delta(k, own, terminal_suffix, w_hat, cells, 0.0);
}

double InducedScheme::delta_cell(size_t piece_index, int k) const {
  return std::max(delta0_of_cell(piece_index, k),
                  delta_windowed_of_cell(piece_index, k));
}

void InducedScheme::write_tails_csv(const std::string& path,
                                    int up_to) const {
  const TailSeries s = tails(up_to);
  CsvWriter w(path);
  w.header({"n", "mass_R", "mass_Rstar", "truncation_mass"});
  for (int n = 0; n <= up_to; ++n) {
    w.field_int(n);
    w.field_num(s.mass_R[static_cast<size_t>(n)]);
    w.field_num(s.mass_Rstar[static_cast<size_t>(n)]);
    w.field_num(s.truncation_mass);
    w.end_row();
  }
}

void InducedScheme::write_delta_csv(const std::string& path,
                                    const std::vector<double>& deltas) const {
  CsvWriter w(path);
  w.header({"k", "delta_k"});
  for (size_t k = 1; k < deltas.size(); ++k) {
    w.field_int(static_cast<long long>(k));
    w.field_num(deltas[k]);
    w.end_row();
  }
}

}  // namespace sollab
