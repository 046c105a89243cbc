// src/common.cc

// Copyright 2026 The ivpipe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "ivpipe/common.h"

#include <atomic>
#include <cstdio>
#include <iostream>

namespace ivpipe {

namespace {
std::atomic<std::uint64_t> g_warning_count{0};
std::atomic<bool> g_quiet{false};
}  // namespace

void Warn(const std::string &msg) {
  ++g_warning_count;
  if (!g_quiet) std::cerr << "WARNING: " << msg << '\n';
}

std::uint64_t WarningCount() { return g_warning_count.load(); }

void SetWarningsQuiet(bool quiet) { g_quiet = quiet; }

std::uint64_t Fnv1a(const void *data, std::size_t size, std::uint64_t seed) {
  const auto *p = static_cast<const unsigned char *>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t Fnv1a(const std::string &s, std::uint64_t seed) {
  return Fnv1a(s.data(), s.size(), seed);
}

std::string HexDigest(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ivpipe
