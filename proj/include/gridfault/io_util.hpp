#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridfault {

/// Raised when an input file is missing or malformed. Carries the path and,
/// when known, the 1-based line where parsing stopped.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& path, const std::string& what, long line = -1)
        : std::runtime_error(line >= 0 ? path + ":" + std::to_string(line) + ": " + what
                                       : path + ": " + what),
          path_(path), line_(line) {}
    const std::string& path() const { return path_; }
    long line() const { return line_; }

private:
    std::string path_;
    long line_;
};

/// Shortest decimal form that round-trips the double exactly.
std::string format_double(double v);

double parse_double(const std::string& s, const std::string& path, long line);
long parse_long(const std::string& s, const std::string& path, long line);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

/// FNV-1a over the file bytes; provenance fingerprint, not a cryptographic hash.
std::uint64_t hash_file(const std::filesystem::path& path);
std::uint64_t hash_bytes(const void* data, std::size_t len);

std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace gridfault
