#include <gtest/gtest.h>

#include "stratarm/csv.hpp"
#include "stratarm/error.hpp"

namespace stratarm {
namespace {

ErrorCode code_of(const std::function<void()>& body) {
  try {
    body();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kInvalidArgument;
}

TEST(Propensity, ParsesAndRejectsInvalidFractions) {
  const auto p = Propensity::parse("2/3");
  EXPECT_EQ(p.treated(), 2);
  EXPECT_EQ(p.group_size(), 3);
  EXPECT_DOUBLE_EQ(p.p(), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(p.scale(), std::sqrt(2.0 / 9.0));
  EXPECT_EQ(p.to_string(), "2/3");
  for (const char* bad : {"2/4", "0/2", "2/2", "3/2", "1/1", "a/b", "1/", "12"}) {
    EXPECT_THROW(Propensity::parse(bad), Error) << bad;
  }
}

TEST(Csv, ParsesQuotedCellsAndColumnPrefixes) {
  const auto table = parse_csv(
      "y,d,\"psi_1\",h_a,h_b,z_1,note\n"
      "1.5,1,0.1,2,3,4,\"a, b\"\n"
      "2.5,0,0.2,5,6,7,\"say \"\"hi\"\"\"\n");
  ASSERT_EQ(table.rows.size(), 2u);
  EXPECT_EQ(table.rows[1][6], "say \"hi\"");
  const auto data = to_experiment_data(table);
  EXPECT_EQ(data.n(), 2);
  EXPECT_EQ(data.dim_psi(), 1);
  EXPECT_EQ(data.dim_h(), 2);
  EXPECT_EQ(data.dim_z(), 1);
  EXPECT_DOUBLE_EQ(data.h(1, 1), 6.0);
  EXPECT_DOUBLE_EQ(data.d[0], 1.0);
}

TEST(Csv, ZColumnsAreOptional) {
  const auto data = to_experiment_data(parse_csv("y,d,psi_1,h_1\n1,1,0,0\n2,0,1,1\n"));
  EXPECT_EQ(data.dim_z(), 0);
}

TEST(Csv, MissingColumnNamesTheColumn) {
  const auto table = parse_csv("d,psi_1,h_1\n1,0,0\n");
  try {
    to_experiment_data(table);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingColumn);
    EXPECT_EQ(e.column(), "y");
  }
}

TEST(Csv, NonNumericCellReportsRow) {
  const auto table = parse_csv("y,d,psi_1,h_1\n1,1,0,0\n2,0,oops,1\n");
  try {
    to_experiment_data(table);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonNumericCell);
    EXPECT_EQ(e.row(), 2);
    EXPECT_EQ(e.column(), "psi_1");
  }
}

TEST(Csv, NonBinaryTreatmentReportsRow) {
  const auto table = parse_csv("y,d,psi_1,h_1\n1,1,0,0\n2,0,1,1\n3,2,1,1\n");
  try {
    to_experiment_data(table);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonBinaryTreatment);
    EXPECT_EQ(e.row(), 3);
  }
  EXPECT_EQ(code_of([] { to_experiment_data(parse_csv("y,d,psi_1,h_1\n1,0.5,0,0\n")); }),
            ErrorCode::kNonBinaryTreatment);
}

TEST(Csv, RaggedRowsAndMissingFiles) {
  EXPECT_EQ(code_of([] { parse_csv("a,b\n1,2\n3\n"); }), ErrorCode::kNonNumericCell);
  EXPECT_EQ(code_of([] { read_csv("/nonexistent/file.csv"); }), ErrorCode::kIo);
}

TEST(ExperimentData, SubsetKeepsRowsInOrder) {
  ExperimentData data;
  data.psi = MatrixXd::Zero(3, 1);
  data.h = (MatrixXd(3, 1) << 1, 2, 3).finished();
  data.z = MatrixXd(3, 0);
  data.y = VectorXd::LinSpaced(3, 10, 12);
  data.d = (VectorXd(3) << 1, 0, 1).finished();
  const std::vector<Index> pick{2, 0};
  const auto sub = data.subset(pick);
  EXPECT_EQ(sub.n(), 2);
  EXPECT_DOUBLE_EQ(sub.y[0], 12.0);
  EXPECT_DOUBLE_EQ(sub.h(1, 0), 1.0);
  EXPECT_EQ(sub.treated_count(), 2);
}

TEST(ExperimentData, ValidateRejectsShapeMismatch) {
  ExperimentData data;
  data.psi = MatrixXd::Zero(3, 1);
  data.h = MatrixXd::Zero(2, 1);
  data.z = MatrixXd(3, 0);
  data.y = VectorXd::Zero(3);
  data.d = VectorXd::Zero(3);
  EXPECT_EQ(code_of([&] { data.validate(); }), ErrorCode::kInvalidArgument);
}

}  // namespace
}  // namespace stratarm
