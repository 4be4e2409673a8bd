#include "musiqa/grader.hpp"

#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "musiqa/dataset.hpp"
#include "musiqa/theory.hpp"

namespace musiqa::grader {

namespace {

using json = nlohmann::ordered_json;

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string trim_if(const std::string& s, bool (*pred)(char)) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && pred(s[b])) ++b;
    while (e > b && pred(s[e - 1])) --e;
    return s.substr(b, e - b);
}

bool space_or_punct(char c) {
    const auto u = static_cast<unsigned char>(c);
    return std::isspace(u) || std::ispunct(u);
}

bool space_or_dollar(char c) { return is_space(c) || c == '$'; }

// Index one past the brace matching the '{' at `open`, or npos.
std::size_t close_brace(const std::string& s, std::size_t open) {
    int depth = 0;
    for (std::size_t i = open; i < s.size(); ++i) {
        if (s[i] == '{') ++depth;
        if (s[i] == '}' && --depth == 0) return i + 1;
    }
    return std::string::npos;
}

std::string unwrap(std::string s) {
    static const char* kWrappers[] = {"\\textbf{", "\\text{", "\\mathrm{", "\\mathbf{"};
    for (bool changed = true; changed;) {
        changed = false;
        s = trim_if(s, space_or_dollar);
        for (const char* w : kWrappers) {
            const std::string prefix = w;
            if (s.rfind(prefix, 0) != 0) continue;
            const std::size_t end = close_brace(s, prefix.size() - 1);
            if (end != s.size()) continue;
            s = s.substr(prefix.size(), s.size() - prefix.size() - 1);
            changed = true;
        }
    }
    return trim_if(s, space_or_punct);
}

bool has_box_token(const std::string& s) { return s.find("\\boxed") != std::string::npos; }

std::optional<char> label_of(const std::string& content) {
    const std::string s = unwrap(content);
    if (s.size() != 1) return std::nullopt;
    const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    if (c < 'A' || c > 'D') return std::nullopt;
    return c;
}

std::string text_field(const json& j, const char* key, std::size_t line) {
    const auto it = j.find(key);
    if (it == j.end() || !it->is_string()) {
        throw dataset::SchemaError(line, std::string("missing string field ") + key);
    }
    return it->get<std::string>();
}

template <typename F>
void for_each_line(std::istream& in, F&& f) {
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim_if(line, is_space).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw dataset::SchemaError(number, std::string("invalid JSON: ") + e.what());
        }
        if (!j.is_object()) throw dataset::SchemaError(number, "expected an object");
        f(j, number);
    }
}

bool is_header_line(const std::string& line) {
    return line.size() >= 2 && std::isalpha(static_cast<unsigned char>(line[0])) && line[1] == ':';
}

}  // namespace

std::vector<std::string> boxed_groups(const std::string& response) {
    std::vector<std::string> out;
    static const std::string kToken = "\\boxed";
    for (std::size_t pos = response.find(kToken); pos != std::string::npos; pos = response.find(kToken, pos + 1)) {
        std::size_t open = pos + kToken.size();
        while (open < response.size() && is_space(response[open])) ++open;
        if (open >= response.size() || response[open] != '{') continue;
        const std::size_t end = close_brace(response, open);
        if (end == std::string::npos) continue;
        out.push_back(response.substr(open + 1, end - open - 2));
    }
    return out;
}

std::optional<char> extract_answer(const std::string& response) {
    const auto groups = boxed_groups(response);
    if (groups.empty()) return std::nullopt;
    return label_of(groups.back());
}

std::string reason_name(FailureReason r) {
    switch (r) {
        case FailureReason::no_boxed: return "no_boxed";
        case FailureReason::unparseable: return "unparseable";
        case FailureReason::wrong: return "wrong";
    }
    return "wrong";
}

std::optional<FailureReason> parse_reason(const std::string& s) {
    if (s == "no_boxed") return FailureReason::no_boxed;
    if (s == "unparseable") return FailureReason::unparseable;
    if (s == "wrong") return FailureReason::wrong;
    return std::nullopt;
}

GradeResult score_label(const std::string& response, char answer_label, const std::string& record_id) {
    GradeResult r;
    r.record_id = record_id;
    r.extracted = extract_answer(response);
    if (!r.extracted) {
        r.reason = has_box_token(response) ? FailureReason::unparseable : FailureReason::no_boxed;
    } else if (*r.extracted == answer_label) {
        r.reward = 1;
    } else {
        r.reason = FailureReason::wrong;
    }
    return r;
}

GradeResult score(const std::string& response, const qgen::QARecord& record) {
    return score_label(response, qgen::present(record).answer_label, record.id);
}

std::vector<double> group_advantages(const std::vector<double>& rewards) {
    if (rewards.size() < 2) throw GroupTooSmall("group needs at least 2 rewards, got " + std::to_string(rewards.size()));
    const double n = static_cast<double>(rewards.size());
    const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
    double ss = 0;
    for (double r : rewards) ss += (r - mean) * (r - mean);
    const double sd = std::sqrt(ss / n);
    std::vector<double> out(rewards.size(), 0.0);
    bool all_equal = true;
    for (double r : rewards) all_equal = all_equal && r == rewards.front();
    if (all_equal || sd == 0) return out;
    for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / sd;
    return out;
}

std::vector<double> grouped_advantages(const std::vector<double>& rewards, std::size_t group_size) {
    if (group_size < 2) throw GroupTooSmall("group size must be at least 2");
    if (rewards.size() % group_size != 0) {
        throw ShapeError(std::to_string(rewards.size()) + " rewards do not split into groups of " +
                         std::to_string(group_size));
    }
    std::vector<double> out;
    out.reserve(rewards.size());
    for (std::size_t i = 0; i < rewards.size(); i += group_size) {
        const auto a = group_advantages(std::vector<double>(rewards.begin() + static_cast<std::ptrdiff_t>(i),
                                                            rewards.begin() + static_cast<std::ptrdiff_t>(i + group_size)));
        out.insert(out.end(), a.begin(), a.end());
    }
    return out;
}

std::optional<std::string> nonstandard_pitch_token(const std::string& body) {
    std::istringstream in(body);
    std::string line;
    while (std::getline(in, line)) {
        if (is_header_line(line)) continue;
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            const char c = line[i];
            if (c == '"') quoted = !quoted;
            if (quoted || c == '%') {
                if (c == '%') break;
                continue;
            }
            const bool upper = c >= 'A' && c <= 'G';
            const bool lower = c >= 'a' && c <= 'g';
            if (!upper && !lower) continue;
            const std::string rest = line.substr(i + 1);
            // U+266D flat, U+266F sharp
            for (const char* sign : {"#", "\xE2\x99\xAD", "\xE2\x99\xAF"}) {
                if (rest.rfind(sign, 0) == 0) return std::string(1, c) + sign;
            }
            if (upper && !rest.empty() && rest[0] == 'b') return std::string(1, c) + "b";
        }
    }
    return std::nullopt;
}

RcVerdict check_rhythmic_consistency(const std::string& continuation, const abc::Meter& meter, const Duration& unit,
                                     const std::string& sample_id, int expected_measures) {
    RcVerdict v;
    v.sample_id = sample_id;

    std::string headers;
    std::string key_line = "K:C";
    std::string body;
    std::istringstream in(continuation);
    std::string line;
    bool in_body = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!in_body && is_header_line(line)) {
            const char field = line[0];
            if (field == 'K') {
                key_line = line;
            } else if (field != 'M' && field != 'L' && field != 'X' && field != 'T') {
                headers += line + "\n";
            }
            continue;
        }
        in_body = in_body || !trim_if(line, is_space).empty();
        body += line + "\n";
    }

    if (const auto bad = nonstandard_pitch_token(body)) {
        v.syntax_error = "non-ABC pitch spelling \"" + *bad + "\"";
        return v;
    }
    const std::string text = "M:" + meter.str() + "\nL:" + unit.str() + "\n" + headers + key_line + "\n" + body;
    abc::Tune tune;
    try {
        tune = abc::parse_tune(text);
    } catch (const Error& e) {
        v.syntax_error = e.what();
        return v;
    }
    v.syntax_ok = true;
    v.measure_count = static_cast<int>(tune.measures.size());
    v.measure_count_ok = v.measure_count == expected_measures;

    const auto report = theory::validate_measures(tune, meter);
    bool all_ok = true;
    for (const auto& m : report.measures) {
        v.per_measure.push_back({m.duration * unit, m.capacity * unit, m.full});
        all_ok = all_ok && m.full;
    }
    v.score = v.syntax_ok && v.measure_count_ok && all_ok ? 1 : 0;
    return v;
}

double rc_score(const std::vector<RcVerdict>& verdicts) {
    if (verdicts.empty()) throw EmptySet("no continuations to score");
    int pass = 0;
    for (const auto& v : verdicts) pass += v.score;
    return static_cast<double>(pass) / static_cast<double>(verdicts.size());
}

std::optional<abc::Meter> parse_meter(const std::string& text) {
    const std::string s = trim_if(text, is_space);
    if (s == "C") return abc::Meter{4, 4};
    if (s == "C|") return abc::Meter{2, 2};
    int beats = 0;
    int unit = 0;
    char tail = 0;
    if (std::sscanf(s.c_str(), "%d/%d%c", &beats, &unit, &tail) != 2) return std::nullopt;
    if (beats <= 0 || unit <= 0) return std::nullopt;
    return abc::Meter{beats, unit};
}

std::optional<Duration> parse_unit(const std::string& text) {
    const std::string s = trim_if(text, is_space);
    int num = 0;
    int den = 0;
    char tail = 0;
    const int n = std::sscanf(s.c_str(), "%d/%d%c", &num, &den, &tail);
    if (n == 1 && num > 0 && s.find('/') == std::string::npos) return Duration(num, 1);
    if (n != 2 || num <= 0 || den <= 0) return std::nullopt;
    return Duration(num, den);
}

std::string format_percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", fraction * 100.0 + 1e-9);
    return buf;
}

std::vector<Response> read_responses(std::istream& in) {
    std::vector<Response> out;
    for_each_line(in, [&](const json& j, std::size_t line) {
        out.push_back({text_field(j, "record_id", line), text_field(j, "response_text", line)});
    });
    return out;
}

std::vector<GradeResult> grade_batch(const std::vector<Response>& responses, const std::vector<qgen::QARecord>& gold,
                                     int jobs) {
    std::unordered_map<std::string, const qgen::QARecord*> by_id;
    for (const auto& r : gold) by_id.emplace(r.id, &r);
    std::vector<const qgen::QARecord*> targets;
    for (const auto& resp : responses) {
        const auto it = by_id.find(resp.record_id);
        if (it == by_id.end()) throw BatchError("unknown record id " + resp.record_id);
        targets.push_back(it->second);
    }
    std::vector<GradeResult> out(responses.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < responses.size(); i = next++) {
            out[i] = score(responses[i].response_text, *targets[i]);
        }
    };
    int n = jobs > 0 ? jobs : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    n = std::max(1, std::min(n, static_cast<int>(responses.size() / 256 + 1)));
    std::vector<std::thread> pool;
    for (int i = 1; i < n; ++i) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    return out;
}

std::string result_json(const GradeResult& r) {
    json j;
    j["record_id"] = r.record_id;
    j["reward"] = r.reward;
    j["extracted"] = r.extracted ? json(std::string(1, *r.extracted)) : json(nullptr);
    j["reason"] = r.reason ? json(reason_name(*r.reason)) : json(nullptr);
    return j.dump();
}

void write_results(const std::vector<GradeResult>& results, std::ostream& out) {
    for (const auto& r : results) out << result_json(r) << '\n';
}

std::vector<GradeResult> read_results(std::istream& in) {
    std::vector<GradeResult> out;
    for_each_line(in, [&](const json& j, std::size_t line) {
        GradeResult r;
        r.record_id = text_field(j, "record_id", line);
        const auto reward = j.find("reward");
        if (reward == j.end() || !reward->is_number_integer() || (*reward != 0 && *reward != 1)) {
            throw dataset::SchemaError(line, "reward must be 0 or 1");
        }
        r.reward = reward->get<int>();
        if (const auto e = j.find("extracted"); e != j.end() && !e->is_null()) {
            const auto s = e->get<std::string>();
            if (s.size() != 1) throw dataset::SchemaError(line, "extracted must be one letter");
            r.extracted = s[0];
        }
        if (const auto e = j.find("reason"); e != j.end() && !e->is_null()) {
            r.reason = parse_reason(e->get<std::string>());
            if (!r.reason) throw dataset::SchemaError(line, "unknown reason");
        }
        out.push_back(r);
    });
    return out;
}

AccuracyTable accuracy_table(const std::vector<GradeResult>& results, const std::vector<qgen::QARecord>& gold) {
    std::unordered_map<std::string, qgen::Category> cat;
    for (const auto& r : gold) cat.emplace(r.id, r.category());
    AccuracyTable t;
    for (qgen::Category c : qgen::all_categories()) t.per_category[c] = {};
    for (const auto& r : results) {
        const auto it = cat.find(r.record_id);
        if (it == cat.end()) throw BatchError("unknown record id " + r.record_id);
        auto& tally = t.per_category[it->second];
        ++tally.total;
        tally.correct += r.reward;
        ++t.overall.total;
        t.overall.correct += r.reward;
    }
    return t;
}

std::string format_table(const AccuracyTable& table) {
    using qgen::Category;
    const Category order[] = {Category::rhythm, Category::chord, Category::interval, Category::scale};
    std::string head;
    std::string row;
    char cell[32];
    for (Category c : order) {
        std::snprintf(cell, sizeof cell, "%-10s", qgen::category_name(c).c_str());
        head += cell;
        std::snprintf(cell, sizeof cell, "%-10s", format_percent(table.per_category.at(c).accuracy()).c_str());
        row += cell;
    }
    head += "Overall";
    row += format_percent(table.overall.accuracy());
    return head + "\n" + row + "\n";
}

std::vector<RcVerdict> check_continuations(std::istream& in) {
    std::vector<RcVerdict> out;
    for_each_line(in, [&](const json& j, std::size_t line) {
        const std::string id = j.contains("sample_id") && j["sample_id"].is_string() ? j["sample_id"].get<std::string>()
                                                                                      : std::to_string(line);
        const std::string text = text_field(j, "continuation", line);
        std::optional<std::string> meter_text;
        std::optional<std::string> unit_text;
        if (j.contains("meter")) meter_text = text_field(j, "meter", line);
        if (j.contains("unit_length")) unit_text = text_field(j, "unit_length", line);
        std::istringstream lines(text);
        std::string l;
        while (std::getline(lines, l)) {
            if (!meter_text && l.rfind("M:", 0) == 0) meter_text = l.substr(2);
            if (!unit_text && l.rfind("L:", 0) == 0) unit_text = l.substr(2);
        }
        if (!meter_text) throw dataset::SchemaError(line, "no meter given");
        const auto meter = parse_meter(*meter_text);
        if (!meter) throw dataset::SchemaError(line, "bad meter " + *meter_text);
        const auto unit = parse_unit(unit_text.value_or("1/8"));
        if (!unit) throw dataset::SchemaError(line, "bad unit length " + *unit_text);
        out.push_back(check_rhythmic_consistency(text, *meter, *unit, id));
    });
    return out;
}

}  // namespace musiqa::grader
