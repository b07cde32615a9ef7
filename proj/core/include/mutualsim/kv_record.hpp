#pragma once

// Flat key/value text records. One record per line: `key=value key=value ...`.
// Configuration files use one `key = value` per line, `#` comments, and may
// give comma-separated lists.

#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mutualsim/mac_analytic.hpp"
#include "mutualsim/mac_des.hpp"

namespace mutualsim::kv {

using Record = std::vector<std::pair<std::string, std::string>>;

/// Key -> (values, line number). Values are the comma-split right-hand side.
struct Entry {
    std::vector<std::string> values;
    int line = 0;
};
using KvMap = std::map<std::string, Entry>;

std::string format_double(double value);
std::string format_record(const Record& record);
Record parse_record(const std::string& line);

/// Throws ParseError with the line number on malformed input.
KvMap parse_kv(std::istream& in);
KvMap parse_kv_file(const std::string& path);

double to_double(const std::string& text, const std::string& field, int line = 0);
long long to_int(const std::string& text, const std::string& field, int line = 0);

Record to_record(const mac::MacParams& params);
Record to_record(const mac::MacSolution& solution);
Record to_record(const des::DesStats& stats);

/// Applies every recognised MacParams key in `map` (optionally under
/// `prefix`, e.g. "mac."). Unknown keys are left for the caller. List values
/// are rejected here; sweeps expand them first.
mac::MacParams apply_mac_fields(mac::MacParams params, const KvMap& map,
                                const std::string& prefix = {});

/// Names of every MacParams field, in record order.
const std::vector<std::string>& mac_param_keys();

}  // namespace mutualsim::kv
