// src/io.cc

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

#include "ivpipe/io.h"

#include <bit>
#include <cctype>
#include <sstream>

namespace ivpipe {

static_assert(std::endian::native == std::endian::little,
              "artifact formats assume a little-endian host");

namespace fs = std::filesystem;

BinaryWriter::BinaryWriter(const fs::path &path)
    : path_(path), tmp_(path.string() + ".tmp") {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  os_.open(tmp_, std::ios::binary | std::ios::trunc);
  if (!os_) throw DataError("cannot open for writing: " + tmp_.string());
}

BinaryWriter::~BinaryWriter() {
  if (!committed_) {
    os_.close();
    std::error_code ec;
    fs::remove(tmp_, ec);
  }
}

void BinaryWriter::Raw(const void *data, std::size_t n) {
  os_.write(static_cast<const char *>(data), static_cast<std::streamsize>(n));
}

void BinaryWriter::Magic(std::string_view magic) { Raw(magic.data(), magic.size()); }
void BinaryWriter::U8(std::uint8_t v) { Raw(&v, 1); }
void BinaryWriter::U32(std::uint32_t v) { Raw(&v, 4); }
void BinaryWriter::U64(std::uint64_t v) { Raw(&v, 8); }
void BinaryWriter::F64(double v) { Raw(&v, 8); }
void BinaryWriter::F32(float v) { Raw(&v, 4); }

void BinaryWriter::String(const std::string &s) {
  U32(static_cast<std::uint32_t>(s.size()));
  Raw(s.data(), s.size());
}

void BinaryWriter::MatrixData(const Matrix &m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) F64(m(r, c));
}

void BinaryWriter::VectorData(const Vector &v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) F64(v(i));
}

void BinaryWriter::Commit() {
  os_.flush();
  if (!os_) throw DataError("write failed: " + tmp_.string());
  os_.close();
  fs::rename(tmp_, path_);
  committed_ = true;
}

BinaryReader::BinaryReader(const fs::path &path) : path_(path) {
  is_.open(path, std::ios::binary);
  if (!is_) throw DataError("cannot open: " + path.string());
}

void BinaryReader::Raw(void *data, std::size_t n) {
  is_.read(static_cast<char *>(data), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is_.gcount()) != n)
    throw DataError("truncated file: " + path_.string());
}

void BinaryReader::ExpectMagic(std::string_view magic) {
  std::string got(magic.size(), '\0');
  Raw(got.data(), got.size());
  if (got != magic)
    throw DataError("bad magic in " + path_.string() + ": expected " +
                    std::string(magic));
}

std::uint8_t BinaryReader::U8() { std::uint8_t v; Raw(&v, 1); return v; }
std::uint32_t BinaryReader::U32() { std::uint32_t v; Raw(&v, 4); return v; }
std::uint64_t BinaryReader::U64() { std::uint64_t v; Raw(&v, 8); return v; }
double BinaryReader::F64() { double v; Raw(&v, 8); return v; }
float BinaryReader::F32() { float v; Raw(&v, 4); return v; }

std::string BinaryReader::String() {
  std::uint32_t n = U32();
  if (n > (1u << 24)) throw DataError("implausible string length in " + path_.string());
  std::string s(n, '\0');
  Raw(s.data(), n);
  return s;
}

Matrix BinaryReader::MatrixData(Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = F64();
  return m;
}

Vector BinaryReader::VectorData(Eigen::Index n) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = F64();
  return v;
}

bool BinaryReader::AtEnd() { return is_.peek() == std::ifstream::traits_type::eof(); }

std::string ManifestEntry::Attr(const std::string &key,
                                const std::string &dflt) const {
  auto it = attrs.find(key);
  return it == attrs.end() ? dflt : it->second;
}

double ManifestEntry::AttrDouble(const std::string &key, double dflt) const {
  auto it = attrs.find(key);
  if (it == attrs.end()) return dflt;
  try {
    return std::stod(it->second);
  } catch (const std::exception &) {
    throw DataError("bad numeric attribute " + key + "=" + it->second +
                    " for " + id);
  }
}

std::vector<std::string> SplitWhitespace(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<ManifestEntry> ReadManifest(const fs::path &path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open manifest: " + path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto tok = SplitWhitespace(line);
    if (tok.empty() || tok[0][0] == '#') continue;
    if (tok.size() < 2)
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected '<id> <path>'");
    ManifestEntry e;
    e.id = tok[0];
    fs::path p(tok[1]);
    e.path = p.is_relative() ? (path.parent_path() / p).string() : p.string();
    for (std::size_t k = 2; k < tok.size(); ++k) {
      auto eq = tok[k].find('=');
      if (eq == std::string::npos)
        throw DataError(path.string() + ":" + std::to_string(lineno) +
                        ": attribute without '='");
      e.attrs[tok[k].substr(0, eq)] = tok[k].substr(eq + 1);
    }
    out.push_back(std::move(e));
  }
  return out;
}

void WriteManifest(const fs::path &path,
                   const std::vector<ManifestEntry> &entries) {
  std::ostringstream os;
  for (const auto &e : entries) {
    os << e.id << ' ' << e.path;
    for (const auto &[k, v] : e.attrs) os << ' ' << k << '=' << v;
    os << '\n';
  }
  WriteTextAtomic(path, os.str());
}

void WriteTextAtomic(const fs::path &path, const std::string &content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw DataError("cannot open for writing: " + tmp.string());
    os << content;
    if (!os) throw DataError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string ReadText(const fs::path &path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open: " + path.string());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace ivpipe
