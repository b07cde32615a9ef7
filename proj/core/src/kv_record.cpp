#include "mutualsim/kv_record.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

namespace mutualsim::kv {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(s);
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

const std::string* single(const KvMap& map, const std::string& key, int& line) {
    const auto it = map.find(key);
    if (it == map.end()) return nullptr;
    line = it->second.line;
    if (it->second.values.size() != 1)
        throw ParseError("expected a single value", line, key);
    return &it->second.values.front();
}

}  // namespace

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

std::string format_record(const Record& record) {
    std::string out;
    for (const auto& [k, v] : record) {
        if (!out.empty()) out += ' ';
        out += k;
        out += '=';
        out += v;
    }
    return out;
}

Record parse_record(const std::string& line) {
    Record rec;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos || eq == 0) throw ParseError("malformed token '" + tok + "'");
        rec.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
    }
    return rec;
}

KvMap parse_kv(std::istream& in) {
    KvMap map;
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ParseError("empty key", line_no);
        if (value.empty()) throw ParseError("empty value", line_no, key);
        if (map.count(key)) throw ParseError("duplicate key", line_no, key);
        map[key] = Entry{split_list(value), line_no};
    }
    return map;
}

KvMap parse_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    return parse_kv(in);
}

double to_double(const std::string& text, const std::string& field, int line) {
    double v = 0.0;
    const auto* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end)
        throw ParseError("not a number: '" + text + "'", line, field);
    return v;
}

long long to_int(const std::string& text, const std::string& field, int line) {
    long long v = 0;
    const auto* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end)
        throw ParseError("not an integer: '" + text + "'", line, field);
    return v;
}

const std::vector<std::string>& mac_param_keys() {
    static const std::vector<std::string> keys = {
        "n_stations", "arrival_rate", "queue_capacity", "w0",        "alpha",
        "m_stages",   "f_extra",      "aifs_slots",     "slot_time", "sifs",
        "data_rate",  "payload_bits", "ack_bits",       "rts_bits",  "cts_bits",
        "propagation_delay", "access_mode", "wait_model"};
    return keys;
}

Record to_record(const mac::MacParams& p) {
    const auto i = [](long long v) { return std::to_string(v); };
    const auto d = [](double v) { return format_double(v); };
    return {{"n_stations", i(p.n_stations)},
            {"arrival_rate", d(p.arrival_rate)},
            {"queue_capacity", i(p.queue_capacity)},
            {"w0", i(p.w0)},
            {"alpha", i(p.alpha)},
            {"m_stages", i(p.m_stages)},
            {"f_extra", i(p.f_extra)},
            {"aifs_slots", i(p.aifs_slots)},
            {"slot_time", d(p.slot_time)},
            {"sifs", d(p.sifs)},
            {"data_rate", d(p.data_rate)},
            {"payload_bits", d(p.payload_bits)},
            {"ack_bits", d(p.ack_bits)},
            {"rts_bits", d(p.rts_bits)},
            {"cts_bits", d(p.cts_bits)},
            {"propagation_delay", d(p.propagation_delay)},
            {"access_mode", mac::to_string(p.access_mode)},
            {"wait_model", mac::to_string(p.wait_model)}};
}

Record to_record(const mac::MacSolution& s) {
    const auto d = [](double v) { return format_double(v); };
    const auto opt = [](const std::optional<double>& v) {
        return v ? format_double(*v) : std::string("saturated");
    };
    return {{"p_trans", d(s.p_trans)},
            {"p_col", d(s.p_col)},
            {"p_idle_slot", d(s.p_idle_slot)},
            {"p_idle", d(s.p_idle)},
            {"p_suc", d(s.p_suc)},
            {"p_fail", d(s.p_fail)},
            {"q0", d(s.q0)},
            {"p00", d(s.p00)},
            {"p_last_state", d(s.p_last_state)},
            {"t_s", d(s.t_s)},
            {"t_f", d(s.t_f)},
            {"t_w", d(s.t_w)},
            {"t_tr_av", d(s.t_tr_av)},
            {"t_serv", d(s.t_serv)},
            {"mu", d(s.mu)},
            {"rho", d(s.rho)},
            {"p_rej", d(s.p_rej)},
            {"p_drop", d(s.p_drop)},
            {"t_q", opt(s.t_q)},
            {"t_delay", opt(s.t_delay)},
            {"lambda_eff", d(s.lambda_eff)},
            {"throughput_raw", d(s.throughput_raw)},
            {"throughput", d(s.throughput)},
            {"iterations", std::to_string(s.iterations)},
            {"residual", d(s.residual)}};
}

Record to_record(const des::DesStats& s) {
    const auto d = [](double v) { return format_double(v); };
    return {{"delivered_per_station", d(s.delivered_per_station)},
            {"mean_total_delay", d(s.mean_total_delay)},
            {"drop_rate", d(s.drop_rate)},
            {"empty_fraction", d(s.empty_fraction)},
            {"collision_fraction", d(s.collision_fraction)},
            {"mean_queue_length", d(s.mean_queue_length)},
            {"effective_arrival_rate", d(s.effective_arrival_rate)},
            {"hw_delivered_per_station", d(s.confidence_halfwidth.delivered_per_station)},
            {"hw_mean_total_delay", d(s.confidence_halfwidth.mean_total_delay)},
            {"hw_drop_rate", d(s.confidence_halfwidth.drop_rate)}};
}

mac::MacParams apply_mac_fields(mac::MacParams p, const KvMap& map, const std::string& prefix) {
    int line = 0;
    const auto get = [&](const char* name) { return single(map, prefix + name, line); };
    const auto as_int = [&](const std::string& v, const char* name) {
        return static_cast<int>(to_int(v, prefix + name, line));
    };
    const auto as_dbl = [&](const std::string& v, const char* name) {
        return to_double(v, prefix + name, line);
    };

    if (auto v = get("n_stations")) p.n_stations = as_int(*v, "n_stations");
    if (auto v = get("arrival_rate")) p.arrival_rate = as_dbl(*v, "arrival_rate");
    if (auto v = get("queue_capacity")) p.queue_capacity = as_int(*v, "queue_capacity");
    if (auto v = get("w0")) p.w0 = as_int(*v, "w0");
    if (auto v = get("alpha")) p.alpha = as_int(*v, "alpha");
    if (auto v = get("m_stages")) p.m_stages = as_int(*v, "m_stages");
    if (auto v = get("f_extra")) p.f_extra = as_int(*v, "f_extra");
    if (auto v = get("aifs_slots")) p.aifs_slots = as_int(*v, "aifs_slots");
    if (auto v = get("slot_time")) p.slot_time = as_dbl(*v, "slot_time");
    if (auto v = get("sifs")) p.sifs = as_dbl(*v, "sifs");
    if (auto v = get("data_rate")) p.data_rate = as_dbl(*v, "data_rate");
    if (auto v = get("payload_bits")) p.payload_bits = as_dbl(*v, "payload_bits");
    if (auto v = get("ack_bits")) p.ack_bits = as_dbl(*v, "ack_bits");
    if (auto v = get("rts_bits")) p.rts_bits = as_dbl(*v, "rts_bits");
    if (auto v = get("cts_bits")) p.cts_bits = as_dbl(*v, "cts_bits");
    if (auto v = get("propagation_delay")) p.propagation_delay = as_dbl(*v, "propagation_delay");
    try {
        if (auto v = get("access_mode")) p.access_mode = mac::parse_access_mode(*v);
        if (auto v = get("wait_model")) p.wait_model = mac::parse_wait_model(*v);
    } catch (const ParseError&) {
        throw;
    } catch (const ConfigError& e) {
        throw ParseError(e.what(), line);
    }
    return p;
}

}  // namespace mutualsim::kv
