#pragma once

// Accuracy-only rewards, group-normalized advantages and the rhythmic
// consistency check for generated continuations.

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "musiqa/abc.hpp"
#include "musiqa/qgen.hpp"

namespace musiqa::grader {

// ---------------------------------------------------------------------------
// Answer extraction and scoring

// Contents of every complete \boxed{...} group, in order. Braces nest.
std::vector<std::string> boxed_groups(const std::string& response);

// Label from the last boxed group. Whitespace and punctuation around the
// label are trimmed and \text{}, \textbf{}, \mathrm{}, \mathbf{} wrappers
// removed; the rest must be one letter A-D in either case.
std::optional<char> extract_answer(const std::string& response);

enum class FailureReason { no_boxed, unparseable, wrong };
std::string reason_name(FailureReason r);
std::optional<FailureReason> parse_reason(const std::string& s);

struct GradeResult {
    std::string record_id;
    std::optional<char> extracted;
    int reward = 0;
    std::optional<FailureReason> reason;

    friend bool operator==(const GradeResult&, const GradeResult&) = default;
};

GradeResult score_label(const std::string& response, char answer_label, const std::string& record_id = {});
// The answer label comes from the record's seeded presentation order.
GradeResult score(const std::string& response, const qgen::QARecord& record);

// ---------------------------------------------------------------------------
// Group-normalized advantages

class GroupTooSmall : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// (r_i - mean) / std with the population std; all zeros when std is 0.
std::vector<double> group_advantages(const std::vector<double>& rewards);

// Applies group_advantages to consecutive groups of `group_size`.
std::vector<double> grouped_advantages(const std::vector<double>& rewards, std::size_t group_size);

// ---------------------------------------------------------------------------
// Rhythmic consistency

struct MeasureCheck {
    Duration duration;
    Duration capacity;
    bool ok = false;
};

struct RcVerdict {
    std::string sample_id;
    bool syntax_ok = false;
    std::string syntax_error;
    int measure_count = 0;
    bool measure_count_ok = false;
    std::vector<MeasureCheck> per_measure;
    int score = 0;
};

// Flags pitch names written the common-notation way ("Bb", "C#", "F♯")
// instead of with ABC accidentals. Header lines and quoted text are skipped.
std::optional<std::string> nonstandard_pitch_token(const std::string& body);

// Stage 1 rejects non-ABC pitch spellings and anything the parser refuses.
// Stage 2 requires exactly `expected_measures` bars, each lasting the meter's
// capacity. Header lines in the continuation are allowed; `meter` and `unit`
// take precedence over its M: and L:.
RcVerdict check_rhythmic_consistency(const std::string& continuation, const abc::Meter& meter,
                                     const Duration& unit, const std::string& sample_id = {},
                                     int expected_measures = 4);

class EmptySet : public Error {
public:
    using Error::Error;
};

double rc_score(const std::vector<RcVerdict>& verdicts);

// "N/D", "C" or "C|".
std::optional<abc::Meter> parse_meter(const std::string& text);
// "1/8" or "1".
std::optional<Duration> parse_unit(const std::string& text);

// fraction x 100 with two decimals: 0.76 -> "76.00".
std::string format_percent(double fraction);

// ---------------------------------------------------------------------------
// Batch protocol

class BatchError : public Error {
public:
    using Error::Error;
};

struct Response {
    std::string record_id;
    std::string response_text;
};

// JSONL {record_id, response_text}. Throws dataset::SchemaError.
std::vector<Response> read_responses(std::istream& in);

// Throws BatchError for a record id missing from `gold`.
std::vector<GradeResult> grade_batch(const std::vector<Response>& responses,
                                     const std::vector<qgen::QARecord>& gold, int jobs = 0);

// JSONL {record_id, reward, extracted, reason}; extracted and reason are null
// when absent.
std::string result_json(const GradeResult& r);
void write_results(const std::vector<GradeResult>& results, std::ostream& out);
std::vector<GradeResult> read_results(std::istream& in);

struct Tally {
    int correct = 0;
    int total = 0;
    double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }
};

struct AccuracyTable {
    std::map<qgen::Category, Tally> per_category;
    Tally overall;
};

AccuracyTable accuracy_table(const std::vector<GradeResult>& results, const std::vector<qgen::QARecord>& gold);

// Two lines: "Rhythm Chord Interval Scale Overall" and the percentages.
std::string format_table(const AccuracyTable& table);

// Continuations JSONL {sample_id, continuation, meter, unit_length}; meter
// and unit_length fall back to the continuation's own M: and L: headers.
std::vector<RcVerdict> check_continuations(std::istream& in);

}  // namespace musiqa::grader
