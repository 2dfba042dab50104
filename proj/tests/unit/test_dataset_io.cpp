#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>

#include "kkr/dynamics.hpp"
#include "kkr/errors.hpp"

namespace kkr {
namespace {

class CsvTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("kkr_csv_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  std::filesystem::path write(const std::string& name, const std::string& body) {
    const auto p = dir_ / name;
    std::ofstream(p) << body;
    return p;
  }

  std::filesystem::path dir_;
};

TEST_F(CsvTest, RoundTripIsExact) {
  const Dataset d = sample_dataset(SystemSpec::van_der_pol(), ObservableSpec::coordinate(1), Box::cube(2, -1.0, 1.0),
                                   7, 1.0 / 14.0, 14, 11);
  const auto p = dir_ / "d.csv";
  save_csv(d, p);
  const Dataset back = load_csv(p);
  ASSERT_EQ(back.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(back[i].states, d[i].states);
    EXPECT_EQ(back[i].outputs, d[i].outputs);
    EXPECT_EQ(back[i].id, d[i].id);
    EXPECT_NEAR(back[i].dt, d[i].dt, 1e-15);
  }
}

TEST_F(CsvTest, HeaderLayout) {
  const Dataset d = sample_dataset(SystemSpec::bistable(), ObservableSpec::coordinate(0), Box::cube(1, -1.0, 1.0), 2,
                                   0.1, 3, 1);
  const auto p = dir_ / "h.csv";
  save_csv(d, p);
  std::ifstream in(p);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "traj_id,t,x0,y");
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, 8u);
}

TEST_F(CsvTest, ToleratesCrlf) {
  const auto p = write("crlf.csv", "traj_id,t,x0,y\r\n0,0,1,1\r\n0,0.5,2,2\r\n");
  const Dataset d = load_csv(p);
  EXPECT_EQ(d.horizon(), 1u);
  EXPECT_DOUBLE_EQ(d.dt(), 0.5);
}

TEST_F(CsvTest, Errors) {
  EXPECT_THROW(load_csv(dir_ / "missing.csv"), IoError);
  EXPECT_THROW(load_csv(write("empty.csv", "")), SchemaError);
  EXPECT_THROW(load_csv(write("hdr.csv", "id,t,x0,y\n0,0,1,1\n0,1,1,1\n")), SchemaError);
  EXPECT_THROW(load_csv(write("cols.csv", "traj_id,t,x0,y\n0,0,1\n")), SchemaError);
  EXPECT_THROW(load_csv(write("nodata.csv", "traj_id,t,x0,y\n")), SchemaError);
  EXPECT_THROW(load_csv(write("single.csv", "traj_id,t,x0,y\n0,0,1,1\n")), SchemaError);
  EXPECT_THROW(load_csv(write("num.csv", "traj_id,t,x0,y\n0,0,abc,1\n0,1,1,1\n")), ParseError);
  EXPECT_THROW(load_csv(write("order.csv", "traj_id,t,x0,y\n1,0,1,1\n1,1,1,1\n0,0,1,1\n0,1,1,1\n")), ParseError);
  EXPECT_THROW(load_csv(write("time.csv", "traj_id,t,x0,y\n0,1,1,1\n0,0,1,1\n")), ParseError);
  EXPECT_THROW(load_csv(write("ragged.csv", "traj_id,t,x0,y\n0,0,1,1\n0,1,1,1\n1,0,1,1\n")), SchemaError);
  EXPECT_THROW(load_csv(write("uneven.csv", "traj_id,t,x0,y\n0,0,1,1\n0,1,1,1\n0,3,1,1\n")), SchemaError);
}

TEST_F(CsvTest, ParseErrorCarriesLine) {
  try {
    load_csv(write("line.csv", "traj_id,t,x0,y\n0,0,1,1\n0,1,x,1\n"));
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST_F(CsvTest, UnwritablePath) {
  EXPECT_THROW(save_csv(sample_dataset(SystemSpec::bistable(), ObservableSpec::coordinate(0),
                                       Box::cube(1, 0.0, 1.0), 1, 0.1, 1, 1),
                        dir_ / "no" / "such" / "dir.csv"),
               IoError);
}

}  // namespace
}  // namespace kkr
