#pragma once

// Per-cell cycling data: the in-memory model, the CSV + JSON interchange
// format, continuation merging, exclusion filtering and cycle-life labels.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cyclife/csv.hpp"
#include "cyclife/error.hpp"
#include "cyclife/parallel.hpp"

namespace cyclife::data {

namespace fs = std::filesystem;

struct CycleSummary {
  int cycle_index = 0;          // 1-based
  double q_discharge = 0.0;     // Ah
  double q_charge = 0.0;        // Ah
  double internal_resistance = 0.0;  // Ohm
  double t_max = 0.0;           // degC
  double t_avg = 0.0;           // degC
  double t_min = 0.0;           // degC
  double charge_time = 0.0;     // minutes

  bool operator==(const CycleSummary&) const = default;
};

struct CurveSample {
  double voltage = 0.0;      // V
  double q_discharge = 0.0;  // Ah

  bool operator==(const CurveSample&) const = default;
};

// Discharge capacity against voltage for one cycle, voltage descending.
struct DischargeCurve {
  int cycle_index = 0;
  std::vector<CurveSample> samples;

  bool operator==(const DischargeCurve&) const = default;
};

inline constexpr double kCurveVoltageMin = 2.0;
inline constexpr double kCurveVoltageMax = 3.5;

struct CellRecord {
  std::string cell_id;
  std::string batch_id;
  std::string charge_policy;
  std::vector<CycleSummary> cycles;
  std::map<int, DischargeCurve> curves;
  bool excluded = false;
  std::string exclusion_reason;

  std::size_t cycle_count() const noexcept { return cycles.size(); }
  bool has_curve(int cycle) const { return curves.find(cycle) != curves.end(); }
  // 1-based access.
  const CycleSummary& cycle(int index) const { return cycles.at(static_cast<std::size_t>(index - 1)); }

  bool operator==(const CellRecord&) const = default;
};

struct ContinuationMerge {
  std::string target;
  std::string source;
  int append_length = 0;

  bool operator==(const ContinuationMerge&) const = default;
};

struct Exclusion {
  std::string cell_id;
  std::string reason;

  bool operator==(const Exclusion&) const = default;
};

// Identity columns not carried by the per-cell CSV files.
struct CellMetadata {
  std::string cell_id;
  std::string batch_id;
  std::string charge_policy;

  bool operator==(const CellMetadata&) const = default;
};

// Contents of manifest.json.
struct ExclusionManifest {
  double nominal_capacity = 1.1;             // Ah
  std::optional<double> eol_threshold;       // Ah; defaults to 0.8 * nominal
  std::optional<double> end_capacity_threshold = 0.885;  // Ah; nullopt disables
  std::vector<ContinuationMerge> continuation_merges;
  std::vector<Exclusion> excluded_cells;
  std::vector<CellMetadata> cells;

  bool operator==(const ExclusionManifest&) const = default;
};

struct Dataset {
  std::vector<CellRecord> cells;
  double nominal_capacity = 1.1;
  double eol_threshold = 0.88;

  // True when eol_threshold is not 80 % of nominal_capacity.
  bool eol_overridden() const { return std::abs(eol_threshold - 0.8 * nominal_capacity) > 1e-9; }

  const CellRecord* find(const std::string& id) const {
    for (const auto& c : cells)
      if (c.cell_id == id) return &c;
    return nullptr;
  }

  bool operator==(const Dataset&) const = default;
};

struct CycleLife {
  int cycles = 0;
  bool censored = false;

  bool operator==(const CycleLife&) const = default;
};

// ---------------------------------------------------------------------------
// Validation

inline void validate_summary(const CycleSummary& c, const std::string& where) {
  const auto bad = [&](const char* field, const std::string& why) {
    fail(ErrorCode::schema, where + ", cycle " + std::to_string(c.cycle_index) + ", field '" +
                                field + "': " + why);
  };
  if (!(c.q_discharge > 0.0)) bad("q_discharge_ah", "must be > 0");
  if (!(c.q_charge > 0.0)) bad("q_charge_ah", "must be > 0");
  if (!(c.internal_resistance > 0.0)) bad("ir_ohm", "must be > 0");
  if (!(c.charge_time > 0.0)) bad("charge_time_min", "must be > 0");
  if (!(c.t_min <= c.t_avg && c.t_avg <= c.t_max)) bad("t_avg_c", "requires t_min <= t_avg <= t_max");
}

inline void validate_curve(const DischargeCurve& curve, const std::string& where) {
  const std::string ctx = where + ", cycle " + std::to_string(curve.cycle_index);
  for (std::size_t i = 0; i < curve.samples.size(); ++i) {
    const auto& s = curve.samples[i];
    if (!(s.voltage >= kCurveVoltageMin && s.voltage <= kCurveVoltageMax))
      fail(ErrorCode::schema, ctx + ", field 'voltage_v': outside [2.0, 3.5] V");
    if (i > 0) {
      if (!(s.voltage < curve.samples[i - 1].voltage))
        fail(ErrorCode::schema, ctx + ", field 'voltage_v': must be strictly decreasing");
      if (s.q_discharge < curve.samples[i - 1].q_discharge)
        fail(ErrorCode::schema, ctx + ", field 'q_discharge_ah': must be non-decreasing");
    }
  }
}

inline void validate_cell(const CellRecord& cell, const std::string& where) {
  for (std::size_t i = 0; i < cell.cycles.size(); ++i) {
    if (cell.cycles[i].cycle_index != static_cast<int>(i) + 1)
      fail(ErrorCode::schema, where + ", field 'cycle': indices must be contiguous from 1 (row " +
                                  std::to_string(i + 2) + " has " +
                                  std::to_string(cell.cycles[i].cycle_index) + ")");
    validate_summary(cell.cycles[i], where);
  }
  for (const auto& [idx, curve] : cell.curves) {
    if (idx != curve.cycle_index || idx < 1 || static_cast<std::size_t>(idx) > cell.cycles.size())
      fail(ErrorCode::schema, where + ": curve references missing cycle " + std::to_string(idx));
    validate_curve(curve, where);
  }
}

// ---------------------------------------------------------------------------
// Labels and merging

// First cycle whose discharge capacity drops below the threshold; cells that
// never cross are censored and labelled cycle_count + 1.
inline CycleLife cycle_life_label(const CellRecord& cell, double eol_threshold) {
  for (const auto& c : cell.cycles)
    if (c.q_discharge < eol_threshold) return {c.cycle_index, false};
  return {static_cast<int>(cell.cycles.size()) + 1, true};
}

// Appends the first append_length + 1 cycles of `source` to `target`. The
// "+1" reproduces the original continuation lists, whose lengths count one
// entry short. Appended cycles (and their curves) are renumbered so the
// result stays contiguous.
inline CellRecord merge_continuation(CellRecord target, const CellRecord& source, int append_length) {
  if (append_length < 0)
    fail(ErrorCode::invalid_argument, "merge_continuation: append_length must be >= 0");
  const std::size_t count = static_cast<std::size_t>(append_length) + 1;
  if (count > source.cycles.size())
    fail(ErrorCode::invalid_argument, "merge_continuation: append_length " +
                                          std::to_string(append_length) + " exceeds source '" +
                                          source.cell_id + "' with " +
                                          std::to_string(source.cycles.size()) + " cycles");
  const int offset = static_cast<int>(target.cycles.size());
  for (std::size_t k = 0; k < count; ++k) {
    CycleSummary c = source.cycles[k];
    const int old_index = c.cycle_index;
    c.cycle_index = offset + static_cast<int>(k) + 1;
    target.cycles.push_back(c);
    if (auto it = source.curves.find(old_index); it != source.curves.end()) {
      DischargeCurve curve = it->second;
      curve.cycle_index = c.cycle_index;
      target.curves[c.cycle_index] = std::move(curve);
    }
  }
  return target;
}

// Flags manifest exclusions and end-capacity outliers. Already-flagged cells
// keep their first reason, so applying the same manifest again is a no-op.
inline Dataset apply_exclusions(Dataset ds, const ExclusionManifest& m) {
  for (const auto& ex : m.excluded_cells) {
    auto it = std::find_if(ds.cells.begin(), ds.cells.end(),
                           [&](const CellRecord& c) { return c.cell_id == ex.cell_id; });
    if (it == ds.cells.end())
      fail(ErrorCode::schema, "manifest.json, field 'excluded_cells': unknown cell_id '" +
                                  ex.cell_id + "'");
    if (!it->excluded) {
      it->excluded = true;
      it->exclusion_reason = ex.reason;
    }
  }
  if (m.end_capacity_threshold) {
    for (auto& c : ds.cells) {
      if (c.excluded || c.cycles.empty()) continue;
      if (c.cycles.back().q_discharge > *m.end_capacity_threshold) {
        c.excluded = true;
        c.exclusion_reason = "endcap";
      }
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Interchange format

inline const std::vector<std::string>& summary_header() {
  static const std::vector<std::string> h{"cycle",  "q_discharge_ah", "q_charge_ah", "ir_ohm",
                                          "t_max_c", "t_avg_c",       "t_min_c",     "charge_time_min"};
  return h;
}

inline const std::vector<std::string>& curve_header() {
  static const std::vector<std::string> h{"cycle", "voltage_v", "q_discharge_ah"};
  return h;
}

inline ExclusionManifest manifest_from_json(const nlohmann::json& j, const std::string& where) {
  using nlohmann::json;
  if (!j.is_object()) fail(ErrorCode::schema, where + ": top level must be an object");
  static const std::set<std::string> known{"nominal_capacity_ah", "eol_threshold_ah",
                                           "end_capacity_threshold_ah", "continuation_merges",
                                           "excluded_cells", "cells"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) fail(ErrorCode::schema, where + ": unknown key '" + key + "'");

  const auto number = [&](const json& v, const std::string& field) {
    if (!v.is_number()) fail(ErrorCode::schema, where + ", field '" + field + "': expected number");
    return v.get<double>();
  };
  const auto string = [&](const json& v, const std::string& field) {
    if (!v.is_string()) fail(ErrorCode::schema, where + ", field '" + field + "': expected string");
    return v.get<std::string>();
  };
  const auto array = [&](const std::string& key) -> const json& {
    static const json empty = json::array();
    if (!j.contains(key)) return empty;
    const json& v = j.at(key);
    if (!v.is_array()) fail(ErrorCode::schema, where + ", field '" + key + "': expected array");
    return v;
  };

  ExclusionManifest m;
  if (j.contains("nominal_capacity_ah"))
    m.nominal_capacity = number(j.at("nominal_capacity_ah"), "nominal_capacity_ah");
  if (j.contains("eol_threshold_ah") && !j.at("eol_threshold_ah").is_null())
    m.eol_threshold = number(j.at("eol_threshold_ah"), "eol_threshold_ah");
  if (j.contains("end_capacity_threshold_ah")) {
    const auto& v = j.at("end_capacity_threshold_ah");
    m.end_capacity_threshold =
        v.is_null() ? std::nullopt : std::optional<double>(number(v, "end_capacity_threshold_ah"));
  }
  for (const auto& e : array("continuation_merges")) {
    if (!e.is_object() || !e.contains("target") || !e.contains("source") || !e.contains("append_length"))
      fail(ErrorCode::schema, where + ", field 'continuation_merges': entries need target, source, append_length");
    const auto& len = e.at("append_length");
    if (!len.is_number_integer())
      fail(ErrorCode::schema, where + ", field 'continuation_merges.append_length': expected integer");
    m.continuation_merges.push_back({string(e.at("target"), "continuation_merges.target"),
                                     string(e.at("source"), "continuation_merges.source"),
                                     len.get<int>()});
  }
  for (const auto& e : array("excluded_cells")) {
    if (!e.is_object() || !e.contains("cell_id"))
      fail(ErrorCode::schema, where + ", field 'excluded_cells': entries need cell_id");
    m.excluded_cells.push_back({string(e.at("cell_id"), "excluded_cells.cell_id"),
                                e.contains("reason") ? string(e.at("reason"), "excluded_cells.reason")
                                                     : std::string("manifest")});
  }
  for (const auto& e : array("cells")) {
    if (!e.is_object() || !e.contains("cell_id"))
      fail(ErrorCode::schema, where + ", field 'cells': entries need cell_id");
    m.cells.push_back({string(e.at("cell_id"), "cells.cell_id"),
                       e.contains("batch_id") ? string(e.at("batch_id"), "cells.batch_id") : "",
                       e.contains("charge_policy") ? string(e.at("charge_policy"), "cells.charge_policy")
                                                   : ""});
  }
  if (!(m.nominal_capacity > 0.0))
    fail(ErrorCode::schema, where + ", field 'nominal_capacity_ah': must be > 0");
  return m;
}

inline nlohmann::json manifest_to_json(const ExclusionManifest& m) {
  using nlohmann::json;
  json j = json::object();
  j["nominal_capacity_ah"] = m.nominal_capacity;
  j["eol_threshold_ah"] = m.eol_threshold ? json(*m.eol_threshold) : json(nullptr);
  j["end_capacity_threshold_ah"] =
      m.end_capacity_threshold ? json(*m.end_capacity_threshold) : json(nullptr);
  j["continuation_merges"] = json::array();
  for (const auto& c : m.continuation_merges)
    j["continuation_merges"].push_back(
        {{"target", c.target}, {"source", c.source}, {"append_length", c.append_length}});
  j["excluded_cells"] = json::array();
  for (const auto& e : m.excluded_cells)
    j["excluded_cells"].push_back({{"cell_id", e.cell_id}, {"reason", e.reason}});
  j["cells"] = json::array();
  for (const auto& c : m.cells)
    j["cells"].push_back(
        {{"cell_id", c.cell_id}, {"batch_id", c.batch_id}, {"charge_policy", c.charge_policy}});
  return j;
}

inline ExclusionManifest read_manifest(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(csv::read_text(path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::schema, path.string() + ": invalid JSON: " + e.what());
  }
  return manifest_from_json(j, path.string());
}

inline void write_manifest(const fs::path& path, const ExclusionManifest& m) {
  csv::write_text(path, manifest_to_json(m).dump(2) + "\n");
}

// Reads <dir>/<id>.csv and, when present, <dir>/<id>.curves.csv.
inline CellRecord read_cell(const fs::path& dir, const std::string& cell_id) {
  CellRecord cell;
  cell.cell_id = cell_id;
  const fs::path summary_path = dir / (cell_id + ".csv");
  if (!fs::exists(summary_path)) fail(ErrorCode::io, summary_path.string() + ": missing file");
  const auto t = csv::read_table(summary_path, summary_header());
  cell.cycles.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    CycleSummary c;
    c.cycle_index = static_cast<int>(t.integer(r, 0));
    c.q_discharge = t.number(r, 1);
    c.q_charge = t.number(r, 2);
    c.internal_resistance = t.number(r, 3);
    c.t_max = t.number(r, 4);
    c.t_avg = t.number(r, 5);
    c.t_min = t.number(r, 6);
    c.charge_time = t.number(r, 7);
    cell.cycles.push_back(c);
  }

  const fs::path curve_path = dir / (cell_id + ".curves.csv");
  if (fs::exists(curve_path)) {
    const auto ct = csv::read_table(curve_path, curve_header());
    int current = -1;
    for (std::size_t r = 0; r < ct.rows.size(); ++r) {
      const int idx = static_cast<int>(ct.integer(r, 0));
      if (idx != current) {
        if (cell.curves.count(idx))
          fail(ErrorCode::schema, curve_path.string() + ", field 'cycle': rows for cycle " +
                                      std::to_string(idx) + " are not grouped");
        cell.curves[idx].cycle_index = idx;
        current = idx;
      }
      cell.curves[idx].samples.push_back({ct.number(r, 1), ct.number(r, 2)});
    }
  }
  validate_cell(cell, summary_path.string());
  return cell;
}

inline void write_cell(const fs::path& dir, const CellRecord& cell) {
  using csv::format_double;
  csv::Writer w(summary_header());
  for (const auto& c : cell.cycles)
    w.row({std::to_string(c.cycle_index), format_double(c.q_discharge), format_double(c.q_charge),
           format_double(c.internal_resistance), format_double(c.t_max), format_double(c.t_avg),
           format_double(c.t_min), format_double(c.charge_time)});
  w.save(dir / (cell.cell_id + ".csv"));

  const fs::path curve_path = dir / (cell.cell_id + ".curves.csv");
  if (cell.curves.empty()) {
    fs::remove(curve_path);
    return;
  }
  csv::Writer cw(curve_header());
  for (const auto& [idx, curve] : cell.curves)
    for (const auto& s : curve.samples)
      cw.row({std::to_string(idx), format_double(s.voltage), format_double(s.q_discharge)});
  cw.save(curve_path);
}

inline bool cell_order(const CellRecord& a, const CellRecord& b) {
  return std::tie(a.batch_id, a.cell_id) < std::tie(b.batch_id, b.cell_id);
}

// Loads every cell under `root`, applies continuation merges (sources are
// consumed) and exclusions, and orders cells by (batch_id, cell_id).
inline Dataset load_dataset(const fs::path& root, const ExclusionManifest& manifest,
                            unsigned threads = 1) {
  if (!fs::is_directory(root)) fail(ErrorCode::io, root.string() + ": not a directory");

  std::set<std::string> ids;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    const std::string curves_suffix = ".curves.csv";
    if (name.size() > curves_suffix.size() &&
        name.compare(name.size() - curves_suffix.size(), curves_suffix.size(), curves_suffix) == 0)
      continue;
    if (entry.path().extension() == ".csv") ids.insert(entry.path().stem().string());
  }
  for (const auto& meta : manifest.cells) ids.insert(meta.cell_id);

  std::vector<std::string> id_list(ids.begin(), ids.end());
  std::vector<CellRecord> cells(id_list.size());
  parallel_for(id_list.size(), threads, [&](std::size_t i) { cells[i] = read_cell(root, id_list[i]); });

  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < cells.size(); ++i) by_id[cells[i].cell_id] = i;
  for (const auto& meta : manifest.cells) {
    auto& c = cells[by_id.at(meta.cell_id)];
    c.batch_id = meta.batch_id;
    c.charge_policy = meta.charge_policy;
  }

  std::set<std::string> consumed;
  for (const auto& merge : manifest.continuation_merges) {
    for (const auto* id : {&merge.target, &merge.source})
      if (!by_id.count(*id) || consumed.count(*id))
        fail(ErrorCode::schema, "manifest.json, field 'continuation_merges': unresolvable cell_id '" +
                                    *id + "'");
    auto& target = cells[by_id.at(merge.target)];
    target = merge_continuation(std::move(target), cells[by_id.at(merge.source)], merge.append_length);
    consumed.insert(merge.source);
  }

  Dataset ds;
  ds.nominal_capacity = manifest.nominal_capacity;
  ds.eol_threshold = manifest.eol_threshold.value_or(0.8 * manifest.nominal_capacity);
  for (auto& c : cells)
    if (!consumed.count(c.cell_id)) ds.cells.push_back(std::move(c));
  std::sort(ds.cells.begin(), ds.cells.end(), cell_order);
  return apply_exclusions(std::move(ds), manifest);
}

// Reads root/manifest.json; a missing manifest means the default one.
inline Dataset load_dataset(const fs::path& root, unsigned threads = 1) {
  const fs::path manifest = root / "manifest.json";
  return load_dataset(root, fs::exists(manifest) ? read_manifest(manifest) : ExclusionManifest{}, threads);
}

// Writes the dataset in the interchange format. The emitted manifest carries
// the already-applied exclusions explicitly (and no end-capacity rule), so
// reloading reproduces the dataset field for field.
inline void save_dataset(const Dataset& ds, const fs::path& root) {
  fs::create_directories(root);
  ExclusionManifest m;
  m.nominal_capacity = ds.nominal_capacity;
  m.eol_threshold = ds.eol_threshold;
  m.end_capacity_threshold = std::nullopt;
  for (const auto& c : ds.cells) {
    write_cell(root, c);
    m.cells.push_back({c.cell_id, c.batch_id, c.charge_policy});
    if (c.excluded) m.excluded_cells.push_back({c.cell_id, c.exclusion_reason});
  }
  write_manifest(root / "manifest.json", m);
}

}  // namespace cyclife::data
