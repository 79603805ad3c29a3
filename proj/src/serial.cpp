#include "serial.hpp"

#include <cstdio>

namespace spencer::serial {

std::vector<uint8_t> read_file(const std::string& path, const char* what) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f)
    throw FileError(std::string(what) + ": cannot open " + path +
                    " for reading");
  std::fseek(f, 0, SEEK_END);
  const long size = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<uint8_t> bytes(size > 0 ? size_t(size) : 0);
  const size_t got = bytes.empty() ? 0 : std::fread(bytes.data(), 1, bytes.size(), f);
  std::fclose(f);
  if (got != bytes.size())
    throw FileError(std::string(what) + ": short read from " + path);
  return bytes;
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes,
                const char* what) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f)
    throw FileError(std::string(what) + ": cannot open " + path +
                    " for writing");
  const size_t wrote =
      bytes.empty() ? 0 : std::fwrite(bytes.data(), 1, bytes.size(), f);
  std::fclose(f);
  if (wrote != bytes.size())
    throw FileError(std::string(what) + ": short write to " + path);
}

}  // namespace spencer::serial
