#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stratarm/data.hpp"

namespace stratarm {

// A stratified randomization: disjoint groups, each of size k with exactly a
// treated units. Units that do not fill a final group are listed in
// `leftover`; they receive a treatment draw but take no part in estimation.
struct Design {
  Index n_units = 0;
  std::vector<std::vector<Index>> groups;
  std::vector<Propensity> propensity;  // one per group
  VectorXd treatment;                  // length n_units
  std::vector<Index> leftover;
  double homogeneity_score = 0.0;
  std::uint64_t seed = 0;

  Index group_count() const noexcept { return static_cast<Index>(groups.size()); }
  bool constant_propensity() const;
  // The shared a/k. Throws kDegeneratePropensity when groups differ.
  const Propensity& common_propensity() const;
  // Group index per unit, -1 for leftover units.
  std::vector<Index> group_of() const;
  // Per-unit a/k of the unit's group (0 for leftover units).
  VectorXd unit_propensity() const;
};

// (1/n) sum over groups of sum over ordered pairs i, j in the group of
// ||psi_i - psi_j||^2, with n the number of grouped units.
double homogeneity_score(const std::vector<std::vector<Index>>& groups, const MatrixXd& psi);

// Groups of k units close in psi. One column: sort and cut. Several columns:
// repeatedly bind the unmatched unit farthest from its nearest unmatched
// neighbour to its k - 1 nearest unmatched neighbours.
std::vector<std::vector<Index>> match_tuples(const MatrixXd& psi, int k,
                                             std::vector<Index>* leftover = nullptr);

Design assign_matched_tuples(const MatrixXd& psi, const Propensity& prop, std::uint64_t rng_seed);
Design assign_complete(Index n, const Propensity& prop, std::uint64_t rng_seed);
// Random groups within each stratum label. Throws kStratumTooSmall.
Design assign_coarse(const std::vector<long>& strata_labels, const Propensity& prop,
                     std::uint64_t rng_seed);
// Matched tuples run separately within each propensity stratum.
Design assign_varying_propensity(const MatrixXd& psi, const std::vector<Propensity>& unit_prop,
                                 std::uint64_t rng_seed);

// Rebuilds a design from group labels and a realized treatment vector; each
// group's a/k is read off its size and treated count.
Design design_from_labels(const std::vector<long>& labels, const VectorXd& treatment);

// Partner map on groups. Pairs satisfy partner[partner[g]] == g. With an odd
// group count exactly one union holds three groups; its members have
// partner == -1 and are listed in `triple`.
struct GroupPairing {
  std::vector<Index> partner;
  std::vector<std::vector<Index>> unions;
  std::optional<std::vector<Index>> triple;
  double centroid_score = 0.0;
};

// Largest group count solved by exact minimum-weight matching.
inline constexpr Index kExactPairingLimit = 20;

GroupPairing pair_groups(const Design& design, const MatrixXd& psi);

// Estimation-ready view: the grouped units only, reindexed 0..m-1 in group
// order, with the design rewritten accordingly.
struct RestrictedExperiment {
  ExperimentData data;
  Design design;
  std::vector<Index> units;  // original index of each retained unit
};
RestrictedExperiment restrict_to_groups(const ExperimentData& data, const Design& design);

// Throws kDesignMismatch unless the design's groups cover exactly the units of
// `data` and every group has exactly a treated units under data.d.
void check_design(const ExperimentData& data, const Design& design);

// FNV-1a hash of the group partition, independent of group and member order.
std::uint64_t groups_hash(const std::vector<std::vector<Index>>& groups);

std::string design_to_json(const Design& design);
Design design_from_json(const std::string& text);

}  // namespace stratarm
