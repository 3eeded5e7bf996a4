/* Copyright 2026 The minimpi Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <random>

#include "minimpi/error.hpp"
#include "minimpi/info.hpp"

namespace minimpi {
namespace {

TEST(Info, SetGetOverwrite) {
  Info info;
  info.set("type", "devstream");
  EXPECT_EQ(info.get("type"), "devstream");
  info.set("type", "other");
  EXPECT_EQ(info.get("type"), "other");
  EXPECT_EQ(info.size(), 1u);
  EXPECT_FALSE(info.get("missing").has_value());
}

TEST(Info, EmptyKeyRejected) {
  Info info;
  try {
    info.set("", "x");
    FAIL() << "expected ERR_ARG";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kArg);
  }
}

TEST(Info, SetHexEncoding) {
  Info info;
  const unsigned char dead[] = {0xDE, 0xAD};
  info.set_hex("value", dead, 2);
  EXPECT_EQ(info.get("value"), "dead");
  info.set_hex("value", nullptr, 0);
  EXPECT_EQ(info.get("value"), "");
  const unsigned char padded[] = {0x00, 0x0F};
  info.set_hex("value", padded, 2);
  EXPECT_EQ(info.get("value"), "000f");
}

TEST(Info, SetHexNegativeLength) {
  Info info;
  const unsigned char b = 1;
  try {
    info.set_hex("value", &b, -1);
    FAIL() << "expected ERR_ARG";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kArg);
  }
}

TEST(Info, HexDecodeRejectsMalformed) {
  EXPECT_THROW(hex_decode("abc"), Error);
  EXPECT_THROW(hex_decode("zz"), Error);
  EXPECT_EQ(hex_decode("DEad").size(), 2u);
}

TEST(Info, HexRoundTripsRandomBytes) {
  std::mt19937 rng(7);
  for (int i = 0; i < 200; ++i) {
    std::vector<std::byte> bytes(rng() % 4097);
    for (auto& b : bytes) b = static_cast<std::byte>(rng());
    EXPECT_EQ(hex_decode(hex_encode(bytes)), bytes);
  }
}

}  // namespace
}  // namespace minimpi
