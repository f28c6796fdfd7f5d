#include <gtest/gtest.h>

#include "aware/config.hpp"

using namespace aware;

TEST(Config, DefaultsValidate) {
  SimConfig c;
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, DumpApplyRoundTrip) {
  SimConfig a;
  a.episode.duration = 33.5;
  a.sensor.azimuth_fov = 1.0;
  a.arch.head_hidden = {64, 32};
  a.bounds.hi[4] = 1234.5;
  a.train.scenes = {"cylinder_cave"};
  a.scene_kind = SceneKind::CylinderCave;
  a.mpc.qp.polish = false;
  const std::string text = ConfigRegistry(a).dump();

  SimConfig b;
  ConfigRegistry rb(b);
  rb.apply_text(text);
  EXPECT_EQ(rb.dump(), text);
  EXPECT_EQ(b.episode.duration, 33.5);
  EXPECT_NEAR(b.sensor.azimuth_fov, 1.0, 1e-15);
  EXPECT_EQ(b.arch.head_hidden, (std::vector<int>{64, 32}));
  EXPECT_EQ(b.bounds.hi[4], 1234.5);
  EXPECT_EQ(b.scene_kind, SceneKind::CylinderCave);
  EXPECT_FALSE(b.mpc.qp.polish);
}

TEST(Config, CommentsAndWhitespace) {
  SimConfig c;
  ConfigRegistry(c).apply_text("# header\n\n  mpc.horizon = 12   # shorter\nreward.alpha1=2\n");
  EXPECT_EQ(c.mpc.N, 12);
  EXPECT_EQ(c.reward.alpha1, 2.0);
}

TEST(Config, UnknownKeyNamesLine) {
  SimConfig c;
  try {
    ConfigRegistry(c).apply_text("mpc.horizon = 10\nmpc.nope = 3\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("mpc.nope"), std::string::npos);
  }
}

TEST(Config, BadValuesRejected) {
  SimConfig c;
  ConfigRegistry r(c);
  EXPECT_THROW(r.set("mpc.horizon", "ten"), ConfigError);
  EXPECT_THROW(r.set("mpc.horizon", "10.5"), ConfigError);
  EXPECT_THROW(r.set("mpc.lambda_R", "nan"), ConfigError);
  EXPECT_THROW(r.set("mpc.qp_polish", "maybe"), ConfigError);
  EXPECT_THROW(r.set("policy.weights_max", "1,2,3"), ConfigError);
  EXPECT_THROW(r.apply_text("no equals sign"), ConfigError);
}

TEST(Config, ValidateCatchesInconsistency) {
  SimConfig c;
  c.mpc.dt = 0.05;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SimConfig{};
  c.panorama.lo_w = 40;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SimConfig{};
  c.mpc.sweep.candidates = 18;
  EXPECT_THROW(c.validate(), ConfigError);
}
