#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dpvis {

enum class VarKind { Binary, Continuous, Categorical };
enum class VarRole { DynamicObserved, DynamicContext, Static, OutcomeEvent };

struct Variable {
    std::string name;
    VarKind kind = VarKind::Binary;
    VarRole role = VarRole::DynamicObserved;

    bool is_dynamic() const noexcept {
        return role == VarRole::DynamicObserved || role == VarRole::DynamicContext;
    }
    bool operator==(const Variable&) const = default;
};

using Schema = std::vector<Variable>;

// nullopt is the missing marker; a missing cell never carries a number.
using Cell = std::optional<double>;

struct Visit {
    double age = 0.0;  // months
    std::map<std::string, Cell> values;

    bool operator==(const Visit&) const = default;
};

struct Subject {
    std::string id;
    std::vector<Visit> visits;  // strictly increasing age
    std::map<std::string, std::optional<std::string>> statics;
    std::map<std::string, double> events;  // event name -> age in months; absent = no event

    bool operator==(const Subject&) const = default;
};

struct Dataset {
    Schema schema;
    std::vector<Subject> subjects;

    const Variable* find_variable(const std::string& name) const;
    const Subject* find_subject(const std::string& id) const;
    std::vector<std::string> variable_names(VarRole role) const;
    std::vector<std::string> dynamic_names() const;
    std::size_t visit_count() const;

    bool operator==(const Dataset&) const = default;
};

struct CsvFiles {
    std::filesystem::path visits;
    std::filesystem::path statics;  // optional; empty path = none
    std::filesystem::path events;   // optional; empty path = none
};

// Validates the schema itself: unique names, outcome events continuous.
void validate_schema(const Schema& schema);

Dataset ingest_csv(const CsvFiles& files, const Schema& schema);

// In-memory variant used by the HTTP upload path; same rules as ingest_csv.
Dataset ingest_csv_text(const std::string& visits, const std::string& statics,
                        const std::string& events, const Schema& schema);

void export_csv(const Dataset& ds, const CsvFiles& files);

struct VariableMissing {
    std::string name;
    std::size_t n_cells = 0;
    std::size_t n_missing = 0;
    double missing_rate = 0.0;
};

struct DatasetSummary {
    std::size_t subject_count = 0;
    std::size_t visit_count = 0;
    std::vector<VariableMissing> missing;  // dynamic variables, schema order
    double age_min = 0.0;
    double age_max = 0.0;
};

DatasetSummary summarize(const Dataset& ds);

// Visits of one subject whose ages agree after rounding to this many
// months are treated as the same visit.
inline constexpr double kAgeResolution = 1e-3;
double round_age(double age) noexcept;

}  // namespace dpvis
