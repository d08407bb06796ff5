// io.hpp - locale-independent number formatting, CSV reading and run metadata

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace dephase {

inline constexpr const char* kToolVersion = "0.1.0";

// 17 significant digits, '.' decimal separator, no locale.
std::string format_double(double value);

// Strict parse of a whole field; throws ValidationError.
double parse_double(std::string_view text);

// 64-bit FNV-1a of the canonical (sorted-key, compact) JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

struct RunMeta {
    std::string config_hash;
    std::optional<std::uint64_t> seed;
};

// "# key: value" lines placed ahead of the CSV header.
void write_meta_comments(std::ostream& os, const RunMeta& meta);
nlohmann::json meta_json(const RunMeta& meta);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Index of a header column; throws ValidationError if absent.
    std::size_t column(std::string_view name) const;
};

// Skips blank lines and lines starting with '#'.
CsvTable read_csv(std::istream& is);

} // namespace dephase
