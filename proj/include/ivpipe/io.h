// include/ivpipe/io.h

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

#ifndef IVPIPE_IO_H_
#define IVPIPE_IO_H_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ivpipe/common.h"

namespace ivpipe {

// Little-endian binary writer. Data goes to "<path>.tmp" and is renamed into
// place by Commit(), so readers never observe a half-written artifact.
class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path &path);
  ~BinaryWriter();
  BinaryWriter(const BinaryWriter &) = delete;
  BinaryWriter &operator=(const BinaryWriter &) = delete;

  void Magic(std::string_view magic);
  void U8(std::uint8_t v);
  void U32(std::uint32_t v);
  void U64(std::uint64_t v);
  void F64(double v);
  void F32(float v);
  void String(const std::string &s);
  // Row-major f64 payload, no dimension header.
  void MatrixData(const Matrix &m);
  void VectorData(const Vector &v);
  void Commit();

 private:
  void Raw(const void *data, std::size_t n);

  std::filesystem::path path_, tmp_;
  std::ofstream os_;
  bool committed_ = false;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path &path);

  // Throws DataError naming the file when the magic does not match.
  void ExpectMagic(std::string_view magic);
  std::uint8_t U8();
  std::uint32_t U32();
  std::uint64_t U64();
  double F64();
  float F32();
  std::string String();
  Matrix MatrixData(Eigen::Index rows, Eigen::Index cols);
  Vector VectorData(Eigen::Index n);
  bool AtEnd();
  const std::filesystem::path &path() const { return path_; }

 private:
  void Raw(void *data, std::size_t n);

  std::filesystem::path path_;
  std::ifstream is_;
};

// One manifest line: "<id> <path> [key=value ...]".
struct ManifestEntry {
  std::string id;
  std::string path;
  std::map<std::string, std::string> attrs;

  std::string Attr(const std::string &key, const std::string &dflt = "") const;
  double AttrDouble(const std::string &key, double dflt) const;
};

// Relative paths are resolved against the manifest's directory on read.
std::vector<ManifestEntry> ReadManifest(const std::filesystem::path &path);
void WriteManifest(const std::filesystem::path &path,
                   const std::vector<ManifestEntry> &entries);

void WriteTextAtomic(const std::filesystem::path &path,
                     const std::string &content);
std::string ReadText(const std::filesystem::path &path);

std::vector<std::string> SplitWhitespace(std::string_view line);

}  // namespace ivpipe

#endif  // IVPIPE_IO_H_
