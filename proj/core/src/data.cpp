#include "stratarm/data.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace stratarm {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kMissingColumn: return "MissingColumn";
    case ErrorCode::kNonNumericCell: return "NonNumericCell";
    case ErrorCode::kNonBinaryTreatment: return "NonBinaryTreatment";
    case ErrorCode::kRankDeficient: return "RankDeficient";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kStratumTooSmall: return "StratumTooSmall";
    case ErrorCode::kSingleGroup: return "SingleGroup";
    case ErrorCode::kEmptyArm: return "EmptyArm";
    case ErrorCode::kDesignMismatch: return "DesignMismatch";
    case ErrorCode::kWeakFirstStage: return "WeakFirstStage";
    case ErrorCode::kDegeneratePropensity: return "DegeneratePropensity";
    case ErrorCode::kMissingPairing: return "MissingPairing";
    case ErrorCode::kDegenerateUnion: return "DegenerateUnion";
    case ErrorCode::kNotRegressionBased: return "NotRegressionBased";
    case ErrorCode::kUnknownModel: return "UnknownModel";
    case ErrorCode::kFailureBudget: return "FailureBudget";
    case ErrorCode::kConfig: return "Config";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

Propensity::Propensity(int a, int k) : a_(a), k_(k) {
  if (a < 1 || a >= k) {
    throw Error(ErrorCode::kInvalidArgument,
                "propensity needs 1 <= a < k, got " + std::to_string(a) + "/" +
                    std::to_string(k));
  }
  if (std::gcd(a, k) != 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "propensity " + std::to_string(a) + "/" + std::to_string(k) +
                    " is not in lowest terms (gcd(a, k) must be 1)");
  }
}

Propensity Propensity::parse(const std::string& text) {
  const auto slash = text.find('/');
  if (slash == std::string::npos) {
    throw Error(ErrorCode::kInvalidArgument, "expected a/k, got '" + text + "'");
  }
  try {
    std::size_t used_a = 0, used_k = 0;
    const std::string a_text = text.substr(0, slash);
    const std::string k_text = text.substr(slash + 1);
    const int a = std::stoi(a_text, &used_a);
    const int k = std::stoi(k_text, &used_k);
    if (used_a != a_text.size() || used_k != k_text.size()) throw std::invalid_argument(text);
    return Propensity(a, k);
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::kInvalidArgument, "expected a/k, got '" + text + "'");
  }
}

double Propensity::scale() const noexcept {
  const double prob = p();
  return std::sqrt(prob * (1.0 - prob));
}

std::string Propensity::to_string() const {
  return std::to_string(a_) + "/" + std::to_string(k_);
}

Index ExperimentData::treated_count() const {
  Index count = 0;
  for (Index i = 0; i < d.size(); ++i) count += d[i] != 0.0;
  return count;
}

void ExperimentData::validate() const {
  const Index rows = n();
  auto check_rows = [rows](const MatrixXd& m, const char* name) {
    if (m.rows() != rows) {
      std::ostringstream msg;
      msg << name << " has " << m.rows() << " rows, expected " << rows;
      throw Error(ErrorCode::kInvalidArgument, msg.str());
    }
  };
  check_rows(psi, "psi");
  check_rows(h, "h");
  check_rows(z, "z");
  if (d.size() != rows) {
    throw Error(ErrorCode::kInvalidArgument, "treatment length differs from outcome length");
  }
  for (Index i = 0; i < rows; ++i) {
    if (d[i] != 0.0 && d[i] != 1.0) {
      throw Error(ErrorCode::kNonBinaryTreatment, "row " + std::to_string(i + 1));
    }
  }
  if (uptake) {
    if (uptake->size() != rows) {
      throw Error(ErrorCode::kInvalidArgument, "uptake length differs from outcome length");
    }
    for (Index i = 0; i < rows; ++i) {
      if ((*uptake)[i] != 0.0 && (*uptake)[i] != 1.0) {
        throw Error(ErrorCode::kNonBinaryTreatment, "uptake row " + std::to_string(i + 1));
      }
    }
  }
}

namespace {

MatrixXd take_rows(const MatrixXd& m, std::span<const Index> units) {
  MatrixXd out(static_cast<Index>(units.size()), m.cols());
  for (std::size_t r = 0; r < units.size(); ++r) out.row(static_cast<Index>(r)) = m.row(units[r]);
  return out;
}

VectorXd take(const VectorXd& v, std::span<const Index> units) {
  VectorXd out(static_cast<Index>(units.size()));
  for (std::size_t r = 0; r < units.size(); ++r) out[static_cast<Index>(r)] = v[units[r]];
  return out;
}

}  // namespace

ExperimentData ExperimentData::subset(std::span<const Index> units) const {
  ExperimentData out;
  out.psi = take_rows(psi, units);
  out.h = take_rows(h, units);
  out.z = take_rows(z, units);
  out.y = take(y, units);
  out.d = take(d, units);
  if (uptake) out.uptake = take(*uptake, units);
  return out;
}

MatrixXd demean(const MatrixXd& m) {
  if (m.rows() == 0) return m;
  return m.rowwise() - m.colwise().mean();
}

MatrixXd covariance_n(const MatrixXd& m) {
  const MatrixXd centered = demean(m);
  return centered.transpose() * centered / static_cast<double>(m.rows());
}

}  // namespace stratarm
