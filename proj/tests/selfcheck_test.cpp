/*
 * Copyright 2026 The xmhash Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include "xmhash/selfcheck.hpp"

namespace xmhash {
namespace {

TEST(Selfcheck, AllChecksPass) {
  for (const auto& r : selfcheck::run_all()) EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
}

TEST(Selfcheck, MutationHookIsDetected) {
  selfcheck::Options opt;
  opt.flip_grad_v_sign = true;
  const auto results = selfcheck::run_all(opt);
  ASSERT_FALSE(results.empty());
  EXPECT_EQ(results[0].name, "output_gradient_fd");
  EXPECT_FALSE(results[0].passed);
  for (std::size_t i = 1; i < results.size(); ++i) EXPECT_TRUE(results[i].passed);
}

}  // namespace
}  // namespace xmhash
