#include "dpvis/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

#include "csv.hpp"
#include "dpvis/error.hpp"

namespace dpvis {

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot write " + path.string());
    out << text;
}

std::string where(std::string_view file, std::size_t line) {
    return std::string(file) + ":" + std::to_string(line);
}

Cell parse_dynamic_cell(const Variable& var, const std::string& raw, std::string_view file,
                        std::size_t line) {
    if (raw.empty()) return std::nullopt;
    auto v = csv::parse_number(raw);
    if (!v) {
        throw Error(Errc::NonNumericValue,
                    "non-numeric value '" + raw + "' for " + var.name + " at " + where(file, line),
                    where(file, line));
    }
    if (var.kind == VarKind::Binary && *v != 0.0 && *v != 1.0) {
        throw Error(Errc::InvalidValue,
                    "binary variable " + var.name + " must be 0 or 1 at " + where(file, line),
                    where(file, line));
    }
    if (var.kind == VarKind::Categorical && *v != std::floor(*v)) {
        throw Error(Errc::InvalidValue,
                    "categorical variable " + var.name + " needs an integer code at " +
                        where(file, line),
                    where(file, line));
    }
    return v;
}

void check_static_value(const Variable& var, const std::string& raw, std::size_t line) {
    if (var.kind == VarKind::Categorical) return;
    auto v = csv::parse_number(raw);
    if (!v) {
        throw Error(Errc::NonNumericValue,
                    "non-numeric value '" + raw + "' for " + var.name + " at " + where("statics", line),
                    where("statics", line));
    }
    if (var.kind == VarKind::Binary && *v != 0.0 && *v != 1.0) {
        throw Error(Errc::InvalidValue,
                    "binary variable " + var.name + " must be 0 or 1 at " + where("statics", line),
                    where("statics", line));
    }
}

struct RawVisit {
    double age;
    std::map<std::string, Cell> values;
};

}  // namespace

double round_age(double age) noexcept {
    return std::round(age / kAgeResolution) * kAgeResolution;
}

const Variable* Dataset::find_variable(const std::string& name) const {
    for (const auto& v : schema)
        if (v.name == name) return &v;
    return nullptr;
}

const Subject* Dataset::find_subject(const std::string& id) const {
    for (const auto& s : subjects)
        if (s.id == id) return &s;
    return nullptr;
}

std::vector<std::string> Dataset::variable_names(VarRole role) const {
    std::vector<std::string> out;
    for (const auto& v : schema)
        if (v.role == role) out.push_back(v.name);
    return out;
}

std::vector<std::string> Dataset::dynamic_names() const {
    std::vector<std::string> out;
    for (const auto& v : schema)
        if (v.is_dynamic()) out.push_back(v.name);
    return out;
}

std::size_t Dataset::visit_count() const {
    std::size_t n = 0;
    for (const auto& s : subjects) n += s.visits.size();
    return n;
}

void validate_schema(const Schema& schema) {
    std::set<std::string> seen;
    for (const auto& v : schema) {
        if (v.name.empty()) throw Error(Errc::InvalidConfig, "schema variable with empty name");
        if (v.name == "subject_id" || v.name == "age_months")
            throw Error(Errc::InvalidConfig, "reserved variable name " + v.name);
        if (!seen.insert(v.name).second)
            throw Error(Errc::InvalidConfig, "duplicate schema variable " + v.name);
        if (v.role == VarRole::OutcomeEvent && v.kind != VarKind::Continuous)
            throw Error(Errc::InvalidConfig, "outcome event " + v.name + " must be continuous");
    }
}

Dataset ingest_csv_text(const std::string& visits_text, const std::string& statics_text,
                        const std::string& events_text, const Schema& schema) {
    validate_schema(schema);
    Dataset ds;
    ds.schema = schema;
    std::unordered_map<std::string, const Variable*> by_name;
    for (const auto& v : ds.schema) by_name.emplace(v.name, &v);

    // Visits
    auto rows = csv::parse(visits_text);
    if (rows.empty()) throw Error(Errc::MalformedRow, "visits file has no header", where("visits", 1));
    const auto& header = rows.front().fields;
    if (header.size() < 2 || header[0] != "subject_id" || header[1] != "age_months") {
        throw Error(Errc::MalformedRow, "visits header must start with subject_id,age_months",
                    where("visits", rows.front().line));
    }
    std::vector<const Variable*> columns;
    std::set<std::string> seen_columns;
    for (std::size_t c = 2; c < header.size(); ++c) {
        auto it = by_name.find(header[c]);
        if (it == by_name.end() || !it->second->is_dynamic()) {
            throw Error(Errc::UnknownVariable, "visits column '" + header[c] + "' is not a dynamic schema variable",
                        where("visits", rows.front().line));
        }
        if (!seen_columns.insert(header[c]).second) {
            throw Error(Errc::MalformedRow, "duplicate visits column " + header[c],
                        where("visits", rows.front().line));
        }
        columns.push_back(it->second);
    }
    for (const auto& v : ds.schema) {
        if (v.is_dynamic() && !seen_columns.count(v.name)) {
            throw Error(Errc::MalformedRow, "visits header lacks dynamic variable " + v.name,
                        where("visits", rows.front().line));
        }
    }

    std::vector<std::string> order;
    std::unordered_map<std::string, std::vector<RawVisit>> raw;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.fields.size() != header.size()) {
            throw Error(Errc::MalformedRow,
                        "expected " + std::to_string(header.size()) + " fields, got " +
                            std::to_string(row.fields.size()) + " at " + where("visits", row.line),
                        where("visits", row.line));
        }
        const std::string& id = row.fields[0];
        if (id.empty()) throw Error(Errc::MalformedRow, "empty subject_id at " + where("visits", row.line), where("visits", row.line));
        auto age = csv::parse_number(row.fields[1]);
        if (!age) {
            throw Error(Errc::NonNumericValue, "non-numeric age '" + row.fields[1] + "' at " + where("visits", row.line),
                        where("visits", row.line));
        }
        if (*age < 0.0) throw Error(Errc::InvalidValue, "negative age at " + where("visits", row.line), where("visits", row.line));
        RawVisit rv{round_age(*age), {}};
        for (std::size_t c = 0; c < columns.size(); ++c)
            rv.values[columns[c]->name] = parse_dynamic_cell(*columns[c], row.fields[c + 2], "visits", row.line);
        auto [it, inserted] = raw.try_emplace(id);
        if (inserted) order.push_back(id);
        it->second.push_back(std::move(rv));
    }

    ds.subjects.reserve(order.size());
    for (const auto& id : order) {
        auto& rvs = raw[id];
        std::stable_sort(rvs.begin(), rvs.end(),
                         [](const RawVisit& a, const RawVisit& b) { return a.age < b.age; });
        Subject s;
        s.id = id;
        for (auto& rv : rvs) {
            if (!s.visits.empty() && s.visits.back().age == rv.age) {
                auto& merged = s.visits.back().values;
                for (auto& [name, cell] : rv.values)
                    if (cell) merged[name] = cell;
                continue;
            }
            s.visits.push_back(Visit{rv.age, std::move(rv.values)});
        }
        for (const auto& v : ds.schema)
            if (v.role == VarRole::Static) s.statics[v.name] = std::nullopt;
        ds.subjects.push_back(std::move(s));
    }
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < ds.subjects.size(); ++i) index.emplace(ds.subjects[i].id, i);

    // Statics
    if (!statics_text.empty()) {
        auto srows = csv::parse(statics_text);
        if (!srows.empty()) {
            const auto& sh = srows.front().fields;
            if (sh.empty() || sh[0] != "subject_id")
                throw Error(Errc::MalformedRow, "statics header must start with subject_id", where("statics", srows.front().line));
            std::vector<const Variable*> scols;
            for (std::size_t c = 1; c < sh.size(); ++c) {
                auto it = by_name.find(sh[c]);
                if (it == by_name.end() || it->second->role != VarRole::Static) {
                    throw Error(Errc::UnknownVariable, "statics column '" + sh[c] + "' is not a static schema variable",
                                where("statics", srows.front().line));
                }
                scols.push_back(it->second);
            }
            for (std::size_t r = 1; r < srows.size(); ++r) {
                const auto& row = srows[r];
                if (row.fields.size() != sh.size()) {
                    throw Error(Errc::MalformedRow, "wrong field count at " + where("statics", row.line),
                                where("statics", row.line));
                }
                auto it = index.find(row.fields[0]);
                if (it == index.end()) {
                    throw Error(Errc::SubjectWithNoVisits, "subject " + row.fields[0] + " has statics but no visits",
                                where("statics", row.line));
                }
                auto& subj = ds.subjects[it->second];
                for (std::size_t c = 0; c < scols.size(); ++c) {
                    const auto& cell = row.fields[c + 1];
                    if (cell.empty()) {
                        subj.statics[scols[c]->name] = std::nullopt;
                    } else {
                        check_static_value(*scols[c], cell, row.line);
                        subj.statics[scols[c]->name] = cell;
                    }
                }
            }
        }
    }

    // Events
    if (!events_text.empty()) {
        auto erows = csv::parse(events_text);
        if (!erows.empty()) {
            const auto& eh = erows.front().fields;
            if (eh.size() != 3 || eh[0] != "subject_id" || eh[1] != "event_name" || eh[2] != "age_months") {
                throw Error(Errc::MalformedRow, "events header must be subject_id,event_name,age_months",
                            where("events", erows.front().line));
            }
            for (std::size_t r = 1; r < erows.size(); ++r) {
                const auto& row = erows[r];
                if (row.fields.size() != 3)
                    throw Error(Errc::MalformedRow, "wrong field count at " + where("events", row.line), where("events", row.line));
                auto var = by_name.find(row.fields[1]);
                if (var == by_name.end() || var->second->role != VarRole::OutcomeEvent) {
                    throw Error(Errc::UnknownVariable, "unknown outcome event '" + row.fields[1] + "' at " + where("events", row.line),
                                where("events", row.line));
                }
                auto age = csv::parse_number(row.fields[2]);
                if (!age) {
                    throw Error(Errc::NonNumericValue, "non-numeric event age at " + where("events", row.line),
                                where("events", row.line));
                }
                if (*age < 0.0) throw Error(Errc::InvalidValue, "negative event age at " + where("events", row.line), where("events", row.line));
                auto it = index.find(row.fields[0]);
                if (it == index.end()) {
                    throw Error(Errc::SubjectWithNoVisits, "subject " + row.fields[0] + " has events but no visits",
                                where("events", row.line));
                }
                ds.subjects[it->second].events[row.fields[1]] = *age;
            }
        }
    }
    return ds;
}

Dataset ingest_csv(const CsvFiles& files, const Schema& schema) {
    std::string visits = read_file(files.visits);
    std::string statics = files.statics.empty() ? std::string{} : read_file(files.statics);
    std::string events = files.events.empty() ? std::string{} : read_file(files.events);
    return ingest_csv_text(visits, statics, events, schema);
}

void export_csv(const Dataset& ds, const CsvFiles& files) {
    const auto dyn = ds.dynamic_names();
    const auto statics = ds.variable_names(VarRole::Static);

    std::string out = "subject_id,age_months";
    for (const auto& n : dyn) out += "," + csv::quote_if_needed(n);
    out += "\n";
    for (const auto& s : ds.subjects) {
        for (const auto& v : s.visits) {
            out += csv::quote_if_needed(s.id) + "," + csv::format_number(v.age);
            for (const auto& n : dyn) {
                out += ",";
                auto it = v.values.find(n);
                if (it != v.values.end() && it->second) out += csv::format_number(*it->second);
            }
            out += "\n";
        }
    }
    write_file(files.visits, out);

    if (!files.statics.empty()) {
        out = "subject_id";
        for (const auto& n : statics) out += "," + csv::quote_if_needed(n);
        out += "\n";
        for (const auto& s : ds.subjects) {
            out += csv::quote_if_needed(s.id);
            for (const auto& n : statics) {
                out += ",";
                auto it = s.statics.find(n);
                if (it != s.statics.end() && it->second) out += csv::quote_if_needed(*it->second);
            }
            out += "\n";
        }
        write_file(files.statics, out);
    }
    if (!files.events.empty()) {
        out = "subject_id,event_name,age_months\n";
        for (const auto& s : ds.subjects)
            for (const auto& [name, age] : s.events)
                out += csv::quote_if_needed(s.id) + "," + csv::quote_if_needed(name) + "," + csv::format_number(age) + "\n";
        write_file(files.events, out);
    }
}

DatasetSummary summarize(const Dataset& ds) {
    DatasetSummary out;
    out.subject_count = ds.subjects.size();
    out.visit_count = ds.visit_count();
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& var : ds.schema) {
        if (!var.is_dynamic()) continue;
        VariableMissing m{var.name, 0, 0, 0.0};
        for (const auto& s : ds.subjects) {
            for (const auto& v : s.visits) {
                ++m.n_cells;
                auto it = v.values.find(var.name);
                if (it == v.values.end() || !it->second) ++m.n_missing;
            }
        }
        m.missing_rate = m.n_cells ? static_cast<double>(m.n_missing) / static_cast<double>(m.n_cells) : 0.0;
        out.missing.push_back(m);
    }
    for (const auto& s : ds.subjects) {
        for (const auto& v : s.visits) {
            lo = std::min(lo, v.age);
            hi = std::max(hi, v.age);
        }
    }
    if (out.visit_count) {
        out.age_min = lo;
        out.age_max = hi;
    }
    return out;
}

}  // namespace dpvis
