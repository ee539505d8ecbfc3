#pragma once

#include <gtest/gtest.h>

#include <vector>

#include "ovgt/backbone.hpp"
#include "ovgt/fusion_sampler.hpp"
#include "ovgt/geoadapter.hpp"
#include "ovgt/synthscene.hpp"

namespace ovgt::testing {

inline BackboneConfig tiny_config(std::size_t size = 16) {
  BackboneConfig c;
  c.dim = 16;
  c.layers = 2;
  c.heads = 2;
  c.patch = 4;
  c.registers = 1;
  c.height = size;
  c.width = size;
  c.mlp_ratio = 2;
  c.camera_head_layers = 1;
  return c;
}

inline SceneSample tiny_scene(std::uint64_t seed, std::size_t frames, std::size_t size = 16) {
  SceneSpec spec;
  spec.seed = seed;
  spec.num_frames = frames;
  spec.height = size;
  spec.width = size;
  spec.world = seed % 2 ? WorldType::kBlobs : WorldType::kPlanes;
  return generate(spec);
}

inline FrameBundle annotated_bundle(const SceneSample& scene, std::vector<std::uint8_t> cameras,
                                    std::vector<std::uint8_t> depths) {
  ModalityAssignment a;
  a.camera_flags = std::move(cameras);
  a.depth_flags = std::move(depths);
  return apply_assignment(scene, a);
}

inline void expect_same(const Tensor& a, const Tensor& b) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) ASSERT_EQ(a.values()[i], b.values()[i]) << "element " << i;
}

inline void expect_same(const Predictions& a, const Predictions& b) {
  expect_same(a.cameras, b.cameras);
  expect_same(a.depth, b.depth);
  expect_same(a.depth_conf, b.depth_conf);
  expect_same(a.pmap, b.pmap);
  expect_same(a.pmap_conf, b.pmap_conf);
}

}  // namespace ovgt::testing
