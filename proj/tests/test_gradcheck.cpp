#include <gtest/gtest.h>

#include "csl/gradcheck.hpp"

namespace csl {
namespace {

TEST(GradCheck, DefaultsPass) {
  const auto report = run_gradcheck();
  ASSERT_EQ(report.components.size(), 5u);
  for (const auto& c : report.components) {
    EXPECT_TRUE(c.passed) << c.name << " max error " << c.max_rel_error;
    EXPECT_EQ(c.instances, 20) << c.name;
    EXPECT_GT(c.checked, c.skipped) << c.name;
    EXPECT_LT(c.max_rel_error, 1e-4) << c.name;
  }
  EXPECT_TRUE(report.passed());
}

TEST(GradCheck, InjectedFaultIsCaught) {
  for (const std::string name : {"encoder", "coarse", "fine", "alignment", "total"}) {
    GradCheckOptions opt;
    opt.instances = 3;
    opt.inject_fault = name;
    const auto report = run_gradcheck(opt);
    EXPECT_FALSE(report.passed()) << name;
    for (const auto& c : report.components) EXPECT_EQ(c.passed, c.name != name) << name << " / " << c.name;
  }
}

TEST(GradCheck, ReproducibleUnderSeed) {
  GradCheckOptions opt;
  opt.instances = 4;
  opt.seed = 9;
  const auto a = run_gradcheck(opt);
  const auto b = run_gradcheck(opt);
  ASSERT_EQ(a.components.size(), b.components.size());
  for (std::size_t i = 0; i < a.components.size(); ++i) {
    EXPECT_EQ(a.components[i].max_rel_error, b.components[i].max_rel_error);
    EXPECT_EQ(a.components[i].checked, b.components[i].checked);
    EXPECT_EQ(a.components[i].skipped, b.components[i].skipped);
  }
}

}  // namespace
}  // namespace csl
