#include "stratarm/design.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>

#include "json.hpp"
#include "stratarm/rng.hpp"

namespace stratarm {
namespace {

double squared_distance(const MatrixXd& x, Index i, Index j) {
  return (x.row(i) - x.row(j)).squaredNorm();
}

struct Chunk {
  std::vector<Index> units;
  Propensity prop;
};

// Draws a of k treated in every group, then floor(a r / k) of the r units in
// each leftover chunk. One generator is consumed in group order.
VectorXd draw_treatment(Index n, const std::vector<std::vector<Index>>& groups,
                        const std::vector<Propensity>& props, const std::vector<Chunk>& leftovers,
                        Rng& rng) {
  VectorXd treatment = VectorXd::Zero(n);
  auto fill = [&](const std::vector<Index>& units, Index count) {
    for (Index pos : rng.choose(static_cast<Index>(units.size()), count)) {
      treatment[units[static_cast<std::size_t>(pos)]] = 1.0;
    }
  };
  for (std::size_t g = 0; g < groups.size(); ++g) fill(groups[g], props[g].treated());
  for (const auto& chunk : leftovers) {
    const auto r = static_cast<Index>(chunk.units.size());
    fill(chunk.units, chunk.prop.treated() * r / chunk.prop.group_size());
  }
  return treatment;
}

std::vector<std::vector<Index>> cut_blocks(const std::vector<Index>& order, int k,
                                           std::vector<Index>& leftover) {
  std::vector<std::vector<Index>> groups;
  const std::size_t full = order.size() / static_cast<std::size_t>(k) * static_cast<std::size_t>(k);
  for (std::size_t start = 0; start < full; start += static_cast<std::size_t>(k)) {
    std::vector<Index> group(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(start + k));
    std::sort(group.begin(), group.end());
    groups.push_back(std::move(group));
  }
  leftover.assign(order.begin() + static_cast<std::ptrdiff_t>(full), order.end());
  return groups;
}

std::vector<std::vector<Index>> greedy_tuples(const MatrixXd& psi, int k,
                                              std::vector<Index>& leftover) {
  const Index n = psi.rows();
  const Index m = psi.cols();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // Row-major copy: distance loops touch one contiguous row per unit.
  std::vector<double> rows(static_cast<std::size_t>(n * m));
  for (Index i = 0; i < n; ++i) {
    for (Index c = 0; c < m; ++c) rows[static_cast<std::size_t>(i * m + c)] = psi(i, c);
  }
  auto dist = [&](Index i, Index j) {
    const double* a = rows.data() + i * m;
    const double* b = rows.data() + j * m;
    double total = 0.0;
    for (Index c = 0; c < m; ++c) total += (a[c] - b[c]) * (a[c] - b[c]);
    return total;
  };

  // Unmatched units in increasing index order, so every scan breaks ties
  // toward the lowest index.
  std::vector<Index> open(static_cast<std::size_t>(n));
  std::iota(open.begin(), open.end(), Index{0});
  std::vector<char> is_open(static_cast<std::size_t>(n), 1);
  std::vector<Index> nearest(static_cast<std::size_t>(n), -1);
  std::vector<double> nearest_dist(static_cast<std::size_t>(n), kInf);

  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double d = dist(i, j);
      if (d < nearest_dist[static_cast<std::size_t>(i)]) {
        nearest_dist[static_cast<std::size_t>(i)] = d;
        nearest[static_cast<std::size_t>(i)] = j;
      }
      if (d < nearest_dist[static_cast<std::size_t>(j)]) {
        nearest_dist[static_cast<std::size_t>(j)] = d;
        nearest[static_cast<std::size_t>(j)] = i;
      }
    }
  }

  std::vector<std::vector<Index>> groups;
  std::vector<std::pair<double, Index>> candidates;
  while (static_cast<Index>(open.size()) >= k) {
    Index anchor = -1;
    double widest = -1.0;
    for (Index i : open) {
      if (nearest_dist[static_cast<std::size_t>(i)] > widest) {
        widest = nearest_dist[static_cast<std::size_t>(i)];
        anchor = i;
      }
    }
    candidates.clear();
    for (Index j : open) {
      if (j != anchor) candidates.emplace_back(dist(anchor, j), j);
    }
    std::partial_sort(candidates.begin(), candidates.begin() + (k - 1), candidates.end());

    std::vector<Index> group{anchor};
    for (int r = 0; r < k - 1; ++r) group.push_back(candidates[static_cast<std::size_t>(r)].second);
    std::sort(group.begin(), group.end());
    for (Index u : group) is_open[static_cast<std::size_t>(u)] = 0;
    open.erase(std::remove_if(open.begin(), open.end(),
                              [&](Index u) { return !is_open[static_cast<std::size_t>(u)]; }),
               open.end());

    for (Index i : open) {
      const Index nn = nearest[static_cast<std::size_t>(i)];
      if (nn >= 0 && is_open[static_cast<std::size_t>(nn)]) continue;
      double best = kInf;
      Index arg = -1;
      for (Index j : open) {
        if (j == i) continue;
        const double d = dist(i, j);
        if (d < best) {
          best = d;
          arg = j;
        }
      }
      nearest[static_cast<std::size_t>(i)] = arg;
      nearest_dist[static_cast<std::size_t>(i)] = best;
    }
    groups.push_back(std::move(group));
  }
  leftover = open;
  return groups;
}

MatrixXd centroids(const Design& design, const MatrixXd& psi) {
  MatrixXd c = MatrixXd::Zero(design.group_count(), psi.cols());
  for (Index g = 0; g < design.group_count(); ++g) {
    const auto& units = design.groups[static_cast<std::size_t>(g)];
    for (Index u : units) c.row(g) += psi.row(u);
    c.row(g) /= static_cast<double>(units.size());
  }
  return c;
}

// Minimum-weight partition of the groups into pairs (plus one triple when the
// count is odd), by dynamic programming over subsets.
std::vector<std::vector<Index>> exact_unions(const MatrixXd& c) {
  const int count = static_cast<int>(c.rows());
  const bool odd = count % 2 == 1;
  MatrixXd dist(count, count);
  for (int i = 0; i < count; ++i)
    for (int j = 0; j < count; ++j) dist(i, j) = squared_distance(c, i, j);

  const std::uint32_t full = (1u << count) - 1u;
  const std::size_t states = std::size_t{1} << count;
  constexpr double kUnset = -1.0;
  // cost[mask * 2 + used]: cheapest completion of the groups outside mask.
  std::vector<double> cost(states * 2, kUnset);
  std::vector<std::uint64_t> choice(states * 2, 0);

  auto solve = [&](auto&& self, std::uint32_t mask, int used) -> double {
    if (mask == full) return (odd && !used) ? std::numeric_limits<double>::infinity() : 0.0;
    const std::size_t key = static_cast<std::size_t>(mask) * 2 + static_cast<std::size_t>(used);
    if (cost[key] != kUnset) return cost[key];
    int i = 0;
    while (mask & (1u << i)) ++i;
    double best = std::numeric_limits<double>::infinity();
    std::uint64_t best_choice = 0;
    for (int j = i + 1; j < count; ++j) {
      if (mask & (1u << j)) continue;
      const std::uint32_t next = mask | (1u << i) | (1u << j);
      const double value = 2.0 * dist(i, j) + self(self, next, used);
      if (value < best) {
        best = value;
        best_choice = static_cast<std::uint64_t>(j);
      }
      if (odd && !used) {
        for (int l = j + 1; l < count; ++l) {
          if (mask & (1u << l)) continue;
          const double tri = dist(i, j) + dist(j, l) + dist(i, l) + self(self, next | (1u << l), 1);
          if (tri < best) {
            best = tri;
            best_choice = static_cast<std::uint64_t>(j) | (static_cast<std::uint64_t>(l + 1) << 32);
          }
        }
      }
    }
    cost[key] = best;
    choice[key] = best_choice;
    return best;
  };
  solve(solve, 0u, 0);

  std::vector<std::vector<Index>> unions;
  std::uint32_t mask = 0;
  int used = 0;
  while (mask != full) {
    int i = 0;
    while (mask & (1u << i)) ++i;
    const std::uint64_t pick = choice[static_cast<std::size_t>(mask) * 2 + static_cast<std::size_t>(used)];
    const int j = static_cast<int>(pick & 0xffffffffu);
    const int l = static_cast<int>(pick >> 32) - 1;
    mask |= (1u << i) | (1u << j);
    if (l >= 0) {
      mask |= 1u << l;
      used = 1;
      unions.push_back({i, j, l});
    } else {
      unions.push_back({i, j});
    }
  }
  return unions;
}

std::vector<std::vector<Index>> greedy_unions(const MatrixXd& c) {
  std::vector<Index> left;
  auto unions = match_tuples(c, 2, &left);
  if (!left.empty()) {
    const Index g = left.front();
    Index best = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (Index h = 0; h < c.rows(); ++h) {
      if (h == g) continue;
      const double dist = squared_distance(c, g, h);
      if (dist < best_dist) {
        best_dist = dist;
        best = h;
      }
    }
    for (auto& u : unions) {
      if (std::find(u.begin(), u.end(), best) != u.end()) {
        u.push_back(g);
        std::sort(u.begin(), u.end());
        break;
      }
    }
  }
  return unions;
}

}  // namespace

bool Design::constant_propensity() const {
  return std::all_of(propensity.begin(), propensity.end(),
                     [&](const Propensity& p) { return p == propensity.front(); });
}

const Propensity& Design::common_propensity() const {
  if (propensity.empty() || !constant_propensity()) {
    throw Error(ErrorCode::kDegeneratePropensity,
                "design does not have a single propensity shared by all groups");
  }
  return propensity.front();
}

std::vector<Index> Design::group_of() const {
  std::vector<Index> owner(static_cast<std::size_t>(n_units), -1);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (Index u : groups[g]) owner[static_cast<std::size_t>(u)] = static_cast<Index>(g);
  }
  return owner;
}

VectorXd Design::unit_propensity() const {
  VectorXd p = VectorXd::Zero(n_units);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (Index u : groups[g]) p[u] = propensity[g].p();
  }
  return p;
}

double homogeneity_score(const std::vector<std::vector<Index>>& groups, const MatrixXd& psi) {
  double total = 0.0;
  Index grouped = 0;
  for (const auto& group : groups) {
    grouped += static_cast<Index>(group.size());
    for (std::size_t i = 0; i < group.size(); ++i)
      for (std::size_t j = i + 1; j < group.size(); ++j)
        total += 2.0 * squared_distance(psi, group[i], group[j]);
  }
  return grouped == 0 ? 0.0 : total / static_cast<double>(grouped);
}

std::vector<std::vector<Index>> match_tuples(const MatrixXd& psi, int k,
                                             std::vector<Index>* leftover) {
  if (psi.rows() == 0) throw Error(ErrorCode::kEmptyInput, "no units to match");
  if (k < 2) throw Error(ErrorCode::kInvalidArgument, "group size must be at least 2");
  std::vector<Index> rest;
  std::vector<std::vector<Index>> groups;
  if (psi.cols() <= 1) {
    std::vector<Index> order(static_cast<std::size_t>(psi.rows()));
    std::iota(order.begin(), order.end(), Index{0});
    if (psi.cols() == 1) {
      std::stable_sort(order.begin(), order.end(),
                       [&](Index i, Index j) { return psi(i, 0) < psi(j, 0); });
    }
    groups = cut_blocks(order, k, rest);
  } else {
    groups = greedy_tuples(psi, k, rest);
  }
  if (leftover) *leftover = std::move(rest);
  return groups;
}

Design assign_matched_tuples(const MatrixXd& psi, const Propensity& prop, std::uint64_t rng_seed) {
  Design design;
  design.n_units = psi.rows();
  design.seed = rng_seed;
  design.groups = match_tuples(psi, prop.group_size(), &design.leftover);
  design.propensity.assign(design.groups.size(), prop);
  design.homogeneity_score = homogeneity_score(design.groups, psi);
  Rng rng(rng_seed);
  std::vector<Chunk> chunks;
  if (!design.leftover.empty()) chunks.push_back({design.leftover, prop});
  design.treatment = draw_treatment(design.n_units, design.groups, design.propensity, chunks, rng);
  return design;
}

Design assign_complete(Index n, const Propensity& prop, std::uint64_t rng_seed) {
  if (n <= 0) throw Error(ErrorCode::kEmptyInput, "no units to assign");
  Design design;
  design.n_units = n;
  design.seed = rng_seed;
  Rng rng(rng_seed);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  rng.shuffle(std::span<Index>(order));
  design.groups = cut_blocks(order, prop.group_size(), design.leftover);
  std::sort(design.leftover.begin(), design.leftover.end());
  design.propensity.assign(design.groups.size(), prop);
  std::vector<Chunk> chunks;
  if (!design.leftover.empty()) chunks.push_back({design.leftover, prop});
  design.treatment = draw_treatment(n, design.groups, design.propensity, chunks, rng);
  return design;
}

Design assign_coarse(const std::vector<long>& strata_labels, const Propensity& prop,
                     std::uint64_t rng_seed) {
  if (strata_labels.empty()) throw Error(ErrorCode::kEmptyInput, "no units to assign");
  std::map<long, std::vector<Index>> strata;
  for (std::size_t i = 0; i < strata_labels.size(); ++i) {
    strata[strata_labels[i]].push_back(static_cast<Index>(i));
  }
  for (const auto& [label, units] : strata) {
    if (static_cast<int>(units.size()) < prop.group_size()) {
      throw Error(ErrorCode::kStratumTooSmall,
                  "stratum " + std::to_string(label) + " has " + std::to_string(units.size()) +
                      " units, fewer than k = " + std::to_string(prop.group_size()));
    }
  }
  Design design;
  design.n_units = static_cast<Index>(strata_labels.size());
  design.seed = rng_seed;
  Rng rng(rng_seed);
  std::vector<Chunk> chunks;
  for (auto& [label, units] : strata) {
    rng.shuffle(std::span<Index>(units));
    std::vector<Index> rest;
    auto groups = cut_blocks(units, prop.group_size(), rest);
    for (auto& g : groups) design.groups.push_back(std::move(g));
    if (!rest.empty()) {
      std::sort(rest.begin(), rest.end());
      design.leftover.insert(design.leftover.end(), rest.begin(), rest.end());
      chunks.push_back({rest, prop});
    }
  }
  std::sort(design.leftover.begin(), design.leftover.end());
  design.propensity.assign(design.groups.size(), prop);
  design.treatment = draw_treatment(design.n_units, design.groups, design.propensity, chunks, rng);
  return design;
}

Design assign_varying_propensity(const MatrixXd& psi, const std::vector<Propensity>& unit_prop,
                                 std::uint64_t rng_seed) {
  if (psi.rows() == 0) throw Error(ErrorCode::kEmptyInput, "no units to assign");
  if (static_cast<Index>(unit_prop.size()) != psi.rows()) {
    throw Error(ErrorCode::kInvalidArgument, "one propensity per unit required");
  }
  std::map<Propensity, std::vector<Index>> strata;
  for (std::size_t i = 0; i < unit_prop.size(); ++i) {
    strata[unit_prop[i]].push_back(static_cast<Index>(i));
  }
  Design design;
  design.n_units = psi.rows();
  design.seed = rng_seed;
  std::vector<Chunk> chunks;
  for (const auto& [prop, units] : strata) {
    if (static_cast<int>(units.size()) < prop.group_size()) {
      throw Error(ErrorCode::kStratumTooSmall,
                  "propensity stratum " + prop.to_string() + " has " +
                      std::to_string(units.size()) + " units");
    }
    const MatrixXd local = psi(units, Eigen::all);
    std::vector<Index> rest;
    for (const auto& g : match_tuples(local, prop.group_size(), &rest)) {
      std::vector<Index> mapped;
      for (Index u : g) mapped.push_back(units[static_cast<std::size_t>(u)]);
      std::sort(mapped.begin(), mapped.end());
      design.groups.push_back(std::move(mapped));
      design.propensity.push_back(prop);
    }
    if (!rest.empty()) {
      Chunk chunk{{}, prop};
      for (Index u : rest) chunk.units.push_back(units[static_cast<std::size_t>(u)]);
      design.leftover.insert(design.leftover.end(), chunk.units.begin(), chunk.units.end());
      chunks.push_back(std::move(chunk));
    }
  }
  std::sort(design.leftover.begin(), design.leftover.end());
  design.homogeneity_score = homogeneity_score(design.groups, psi);
  Rng rng(rng_seed);
  design.treatment = draw_treatment(design.n_units, design.groups, design.propensity, chunks, rng);
  return design;
}

Design design_from_labels(const std::vector<long>& labels, const VectorXd& treatment) {
  if (labels.empty()) throw Error(ErrorCode::kEmptyInput, "no group labels");
  if (static_cast<Index>(labels.size()) != treatment.size()) {
    throw Error(ErrorCode::kInvalidArgument, "group labels and treatment differ in length");
  }
  std::map<long, std::vector<Index>> by_label;
  Design design;
  design.n_units = treatment.size();
  design.treatment = treatment;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) {
      design.leftover.push_back(static_cast<Index>(i));
    } else {
      by_label[labels[i]].push_back(static_cast<Index>(i));
    }
  }
  for (auto& [label, units] : by_label) {
    int treated = 0;
    for (Index u : units) treated += treatment[u] != 0.0;
    try {
      design.propensity.emplace_back(treated, static_cast<int>(units.size()));
    } catch (const Error& e) {
      throw Error(ErrorCode::kDesignMismatch,
                  "group " + std::to_string(label) + " (" + std::to_string(treated) + " of " +
                      std::to_string(units.size()) + " treated) is not a valid a/k group");
    }
    design.groups.push_back(std::move(units));
  }
  return design;
}

GroupPairing pair_groups(const Design& design, const MatrixXd& psi) {
  if (design.group_count() < 2) {
    throw Error(ErrorCode::kSingleGroup, "pairing needs at least two groups");
  }
  if (psi.rows() != design.n_units) {
    throw Error(ErrorCode::kDesignMismatch, "psi rows do not match the design's unit count");
  }
  const MatrixXd c = centroids(design, psi);
  GroupPairing pairing;
  pairing.unions = design.group_count() <= kExactPairingLimit ? exact_unions(c) : greedy_unions(c);
  pairing.partner.assign(static_cast<std::size_t>(design.group_count()), -1);

  double total = 0.0;
  Index grouped = 0;
  for (const auto& g : design.groups) grouped += static_cast<Index>(g.size());
  for (const auto& u : pairing.unions) {
    if (u.size() == 2) {
      pairing.partner[static_cast<std::size_t>(u[0])] = u[1];
      pairing.partner[static_cast<std::size_t>(u[1])] = u[0];
      total += 2.0 * squared_distance(c, u[0], u[1]);
    } else {
      pairing.triple = u;
      total += squared_distance(c, u[0], u[1]) + squared_distance(c, u[1], u[2]) +
               squared_distance(c, u[0], u[2]);
    }
  }
  pairing.centroid_score = total / static_cast<double>(grouped);
  return pairing;
}

void check_design(const ExperimentData& data, const Design& design) {
  if (design.n_units != data.n()) {
    throw Error(ErrorCode::kDesignMismatch,
                "design covers " + std::to_string(design.n_units) + " units, data has " +
                    std::to_string(data.n()));
  }
  if (!design.leftover.empty()) {
    throw Error(ErrorCode::kDesignMismatch,
                "design has leftover units; estimate on restrict_to_groups(data, design)");
  }
  std::vector<char> seen(static_cast<std::size_t>(data.n()), 0);
  for (std::size_t g = 0; g < design.groups.size(); ++g) {
    const auto& group = design.groups[g];
    if (static_cast<int>(group.size()) != design.propensity[g].group_size()) {
      throw Error(ErrorCode::kDesignMismatch, "group " + std::to_string(g) + " has the wrong size");
    }
    int treated = 0;
    for (Index u : group) {
      if (u < 0 || u >= data.n() || seen[static_cast<std::size_t>(u)]) {
        throw Error(ErrorCode::kDesignMismatch, "design groups are not a partition of the units");
      }
      seen[static_cast<std::size_t>(u)] = 1;
      treated += data.d[u] != 0.0;
    }
    if (treated != design.propensity[g].treated()) {
      throw Error(ErrorCode::kDesignMismatch,
                  "group " + std::to_string(g) + " has " + std::to_string(treated) +
                      " treated units, expected " + std::to_string(design.propensity[g].treated()));
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw Error(ErrorCode::kDesignMismatch, "design groups do not cover every unit");
  }
}

RestrictedExperiment restrict_to_groups(const ExperimentData& data, const Design& design) {
  if (design.n_units != data.n()) {
    throw Error(ErrorCode::kDesignMismatch, "design and data differ in unit count");
  }
  RestrictedExperiment out;
  for (const auto& g : design.groups) out.units.insert(out.units.end(), g.begin(), g.end());
  out.data = data.subset(out.units);
  out.design.n_units = static_cast<Index>(out.units.size());
  out.design.propensity = design.propensity;
  out.design.homogeneity_score = design.homogeneity_score;
  out.design.seed = design.seed;
  out.design.treatment = design.treatment(out.units);
  Index next = 0;
  for (const auto& g : design.groups) {
    std::vector<Index> local(g.size());
    for (auto& u : local) u = next++;
    out.design.groups.push_back(std::move(local));
  }
  return out;
}

std::uint64_t groups_hash(const std::vector<std::vector<Index>>& groups) {
  std::vector<std::vector<Index>> sorted = groups;
  for (auto& g : sorted) std::sort(g.begin(), g.end());
  std::sort(sorted.begin(), sorted.end());
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  auto mix = [&](std::uint64_t value) {
    for (int byte = 0; byte < 8; ++byte) {
      hash ^= (value >> (8 * byte)) & 0xffu;
      hash *= 0x100000001b3ULL;
    }
  };
  for (const auto& g : sorted) {
    mix(g.size());
    for (Index u : g) mix(static_cast<std::uint64_t>(u));
  }
  return hash;
}

std::string design_to_json(const Design& design) {
  nlohmann::json j;
  j["groups"] = design.groups;
  if (design.constant_propensity() && !design.propensity.empty()) {
    j["a"] = design.propensity.front().treated();
    j["k"] = design.propensity.front().group_size();
  } else {
    std::vector<std::string> props;
    for (const auto& p : design.propensity) props.push_back(p.to_string());
    j["propensities"] = props;
  }
  std::vector<int> treatment(static_cast<std::size_t>(design.treatment.size()));
  for (Index i = 0; i < design.treatment.size(); ++i) {
    treatment[static_cast<std::size_t>(i)] = design.treatment[i] != 0.0;
  }
  j["treatment"] = treatment;
  j["leftover"] = design.leftover;
  j["n"] = design.n_units;
  j["homogeneity_score"] = design.homogeneity_score;
  j["seed"] = design.seed;
  j["rng"] = std::string(Rng::kName);
  j["groups_hash"] = groups_hash(design.groups);
  return j.dump(2);
}

Design design_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("design JSON: ") + e.what());
  }
  try {
    Design design;
    design.groups = j.at("groups").get<std::vector<std::vector<Index>>>();
    const auto treatment = j.at("treatment").get<std::vector<int>>();
    design.treatment.resize(static_cast<Index>(treatment.size()));
    for (std::size_t i = 0; i < treatment.size(); ++i) {
      design.treatment[static_cast<Index>(i)] = treatment[i];
    }
    design.n_units = j.value("n", static_cast<Index>(treatment.size()));
    design.leftover = j.value("leftover", std::vector<Index>{});
    design.homogeneity_score = j.value("homogeneity_score", 0.0);
    design.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("propensities")) {
      for (const auto& p : j.at("propensities").get<std::vector<std::string>>()) {
        design.propensity.push_back(Propensity::parse(p));
      }
    } else {
      design.propensity.assign(design.groups.size(),
                               Propensity(j.at("a").get<int>(), j.at("k").get<int>()));
    }
    if (design.propensity.size() != design.groups.size()) {
      throw Error(ErrorCode::kConfig, "design JSON: one propensity per group required");
    }
    for (const auto& g : design.groups) {
      for (Index u : g) {
        if (u < 0 || u >= design.n_units) {
          throw Error(ErrorCode::kConfig, "design JSON: unit index out of range");
        }
      }
    }
    return design;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("design JSON: ") + e.what());
  }
}

}  // namespace stratarm
