#include "qeval/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "qeval/metrics.hpp"

namespace qeval::report {

namespace fs = std::filesystem;

std::optional<Format> parse_format(std::string_view text) {
  if (text == "csv") return Format::csv;
  if (text == "markdown" || text == "md") return Format::markdown;
  if (text == "svg") return Format::svg;
  return std::nullopt;
}

void ReportSpec::validate() const {
  if (inputs.empty()) throw ReportError("no results files given");
  if (formats.empty()) throw ReportError("no output formats selected");
  if (baseline && !(baseline->pass_rate >= 0.0 && baseline->pass_rate <= 1.0)) {
    throw ReportError("baseline pass rate must be in [0, 1]");
  }
}

namespace {

std::string round_half_even(double value, int decimals) {
  double scale = std::pow(10.0, decimals);
  double x = value * scale;
  double fl = std::floor(x);
  double frac = x - fl;
  double r;
  // Binary fractions land near, not on, decimal ties; treat "near" as a tie.
  if (std::abs(frac - 0.5) < 1e-9) {
    r = std::fmod(fl, 2.0) == 0.0 ? fl : fl + 1.0;
  } else {
    r = std::round(x);
  }
  std::ostringstream out;
  out << std::fixed << std::setprecision(decimals) << (r / scale == 0.0 ? 0.0 : r / scale);
  return out.str();
}

}  // namespace

std::string format_percent(double fraction) { return round_half_even(fraction * 100.0, 1); }
std::string format_seconds(double seconds) { return round_half_even(seconds, 0); }

std::vector<LoadedRun> load_runs(std::span<const fs::path> inputs) {
  std::vector<LoadedRun> runs;
  for (const auto& path : inputs) {
    try {
      runs.push_back({path, read_results(path)});
    } catch (const ResultsFormatError& e) {
      throw ReportError(e.what());
    }
    if (runs.back().file.records.empty()) throw ReportError(path.string() + ": no records");
  }
  auto ids_of = [](const LoadedRun& r) {
    std::set<std::string> ids;
    for (const auto& rec : r.file.records) ids.insert(rec.task_id);
    return ids;
  };
  if (runs.empty()) return runs;
  auto reference = ids_of(runs.front());
  for (std::size_t i = 1; i < runs.size(); ++i) {
    auto ids = ids_of(runs[i]);
    if (ids == reference) continue;
    std::vector<std::string> missing, extra;
    std::set_difference(reference.begin(), reference.end(), ids.begin(), ids.end(), std::back_inserter(missing));
    std::set_difference(ids.begin(), ids.end(), reference.begin(), reference.end(), std::back_inserter(extra));
    std::string msg = "task sets differ between " + runs.front().path.string() + " and " + runs[i].path.string();
    auto list = [](const std::vector<std::string>& v) {
      std::string s;
      for (std::size_t j = 0; j < v.size() && j < 20; ++j) s += (j ? ", " : "") + v[j];
      if (v.size() > 20) s += ", ... (" + std::to_string(v.size()) + " total)";
      return s;
    };
    if (!missing.empty()) msg += "; missing: " + list(missing);
    if (!extra.empty()) msg += "; extra: " + list(extra);
    throw ReportError(msg);
  }
  return runs;
}

std::vector<SummaryRow> summary_rows(std::span<const LoadedRun> runs, const std::optional<Baseline>& baseline) {
  std::vector<SummaryRow> rows;
  if (baseline) {
    SummaryRow b;
    b.model = baseline->label;
    b.pass_rate = baseline->pass_rate;
    b.baseline = true;
    rows.push_back(b);
  }
  // (model, strategy) in order of first appearance.
  std::vector<std::pair<std::string, std::string>> keys;
  std::map<std::pair<std::string, std::string>, std::vector<EvalSummary>> groups;
  for (const auto& run : runs) {
    std::pair key{run.file.header.model, run.file.header.strategy};
    if (!groups.count(key)) keys.push_back(key);
    try {
      groups[key].push_back(summarize(run.file.records));
    } catch (const SummaryError& e) {
      throw ReportError(run.path.string() + ": " + e.what());
    }
  }
  for (const auto& key : keys) {
    const auto& sums = groups[key];
    double n = static_cast<double>(sums.size());
    SummaryRow row;
    row.model = key.first;
    row.strategy = key.second;
    row.tasks = sums.front().task_count;
    double time = 0.0;
    for (const auto& s : sums) {
      row.pass_rate += s.overall_pass_rate / n;
      time += s.total_wall_time / n;
      row.harness_errors += s.harness_errors;
      for (auto [tier, rate] : s.per_tier_pass_rate) row.tier_pass_rate[tier] += rate / n;
    }
    row.total_time_s = time;
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string md_cell(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    out += c;
  }
  return out;
}

std::string tier_cell(const SummaryRow& row, Tier t) {
  auto it = row.tier_pass_rate.find(t);
  return it == row.tier_pass_rate.end() ? std::string() : format_percent(it->second);
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(1) << v;
  return out.str();
}

constexpr std::array<const char*, 8> kPalette{"#4e79a7", "#f28e2b", "#59a14f", "#e15759",
                                               "#76b7b2", "#edc948", "#b07aa1", "#9c755f"};

// Grouped vertical bars. values[g][s] is bar s of group g (nullopt: no bar).
struct BarPanel {
  std::string title;
  std::string unit;
  double y_max = 1.0;
  std::vector<std::string> groups;
  std::vector<std::string> series;
  std::vector<std::vector<std::optional<double>>> values;
  std::optional<std::pair<std::string, double>> reference_line;
};

void draw_panel(std::ostringstream& svg, const BarPanel& p, double top, double width, double height) {
  const double left = 70.0, right = 20.0, label_h = 40.0;
  const double plot_w = width - left - right;
  const double plot_h = height - label_h - 30.0;
  const double base = top + 30.0 + plot_h;
  svg << "<text x=\"" << num(width / 2) << "\" y=\"" << num(top + 18) << "\" text-anchor=\"middle\" font-size=\"14\">"
      << xml_escape(p.title) << "</text>\n";
  svg << "<line x1=\"" << num(left) << "\" y1=\"" << num(base) << "\" x2=\"" << num(left + plot_w) << "\" y2=\""
      << num(base) << "\" stroke=\"#333\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    double v = p.y_max * tick / 4.0;
    double y = base - plot_h * tick / 4.0;
    svg << "<line x1=\"" << num(left - 4) << "\" y1=\"" << num(y) << "\" x2=\"" << num(left + plot_w) << "\" y2=\""
        << num(y) << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << num(left - 8) << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\" font-size=\"11\">"
        << num(v) << xml_escape(p.unit) << "</text>\n";
  }
  if (p.groups.empty()) return;
  const double group_w = plot_w / static_cast<double>(p.groups.size());
  const double bar_w = group_w * 0.8 / static_cast<double>(std::max<std::size_t>(1, p.series.size()));
  for (std::size_t g = 0; g < p.groups.size(); ++g) {
    double gx = left + group_w * static_cast<double>(g) + group_w * 0.1;
    for (std::size_t s = 0; s < p.series.size(); ++s) {
      const auto& v = p.values[g][s];
      if (!v) continue;
      double h = p.y_max > 0 ? plot_h * std::min(*v, p.y_max) / p.y_max : 0.0;
      double x = gx + bar_w * static_cast<double>(s);
      svg << "<rect x=\"" << num(x) << "\" y=\"" << num(base - h) << "\" width=\"" << num(bar_w * 0.95)
          << "\" height=\"" << num(h) << "\" fill=\"" << kPalette[s % kPalette.size()] << "\"><title>"
          << xml_escape(p.groups[g] + " / " + p.series[s]) << ": " << num(*v) << xml_escape(p.unit)
          << "</title></rect>\n";
    }
    svg << "<text x=\"" << num(gx + group_w * 0.4) << "\" y=\"" << num(base + 16)
        << "\" text-anchor=\"middle\" font-size=\"11\">" << xml_escape(p.groups[g]) << "</text>\n";
  }
  if (p.reference_line) {
    double y = base - plot_h * std::min(p.reference_line->second, p.y_max) / p.y_max;
    svg << "<line x1=\"" << num(left) << "\" y1=\"" << num(y) << "\" x2=\"" << num(left + plot_w) << "\" y2=\""
        << num(y) << "\" stroke=\"#c00\" stroke-dasharray=\"6 4\"/>\n";
    svg << "<text x=\"" << num(left + plot_w) << "\" y=\"" << num(y - 4) << "\" text-anchor=\"end\" font-size=\"11\" fill=\"#c00\">"
        << xml_escape(p.reference_line->first) << "</text>\n";
  }
}

void draw_legend(std::ostringstream& svg, const std::vector<std::string>& series, double y) {
  double x = 70.0;
  for (std::size_t s = 0; s < series.size(); ++s) {
    svg << "<rect x=\"" << num(x) << "\" y=\"" << num(y - 10) << "\" width=\"12\" height=\"12\" fill=\""
        << kPalette[s % kPalette.size()] << "\"/>\n";
    svg << "<text x=\"" << num(x + 16) << "\" y=\"" << num(y) << "\" font-size=\"11\">" << xml_escape(series[s])
        << "</text>\n";
    x += 24.0 + 7.0 * static_cast<double>(series[s].size());
  }
}

std::string svg_open(double width, double height) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
    << "\" viewBox=\"0 0 " << num(width) << " " << num(height) << "\" font-family=\"sans-serif\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return s.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  if (!out) throw ReportError("cannot write " + path.string());
}

std::vector<SummaryRow> measured(std::span<const SummaryRow> rows) {
  std::vector<SummaryRow> out;
  for (const auto& r : rows) {
    if (!r.baseline) out.push_back(r);
  }
  return out;
}

}  // namespace

std::string summary_csv(std::span<const SummaryRow> rows) {
  std::string out =
      "model,strategy,pass_at_1_pct,total_time_s,tier_basic_pct,tier_intermediate_pct,"
      "tier_advanced_pct,tasks,harness_errors\n";
  for (const auto& r : rows) {
    out += csv_cell(r.model) + "," + csv_cell(r.strategy) + "," + format_percent(r.pass_rate) + ",";
    out += r.total_time_s ? format_seconds(*r.total_time_s) : "";
    for (Tier t : kAllTiers) out += "," + tier_cell(r, t);
    out += ",";
    if (!r.baseline) out += std::to_string(r.tasks);
    out += ",";
    if (!r.baseline) out += std::to_string(r.harness_errors);
    out += "\n";
  }
  return out;
}

std::string summary_markdown(std::span<const SummaryRow> rows) {
  std::string out =
      "| Model | Strategy | Pass@1 (%) | Serialized time (s) | Basic (%) | Intermediate (%) | Advanced (%) | "
      "Tasks | Harness errors |\n"
      "|---|---|---:|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& r : rows) {
    out += "| " + md_cell(r.model) + " | " + md_cell(r.strategy) + " | " + format_percent(r.pass_rate) + " | ";
    out += (r.total_time_s ? format_seconds(*r.total_time_s) : "") + " |";
    for (Tier t : kAllTiers) out += " " + tier_cell(r, t) + " |";
    out += " " + (r.baseline ? std::string() : std::to_string(r.tasks)) + " |";
    out += " " + (r.baseline ? std::string() : std::to_string(r.harness_errors)) + " |\n";
  }
  return out;
}

std::string summary_svg(std::span<const SummaryRow> rows) {
  auto data = measured(rows);
  BarPanel acc{"Pass@1 accuracy (%)", "%", 100.0, {}, {}, {}, {}};
  BarPanel time{"Serialized wall time (s)", "s", 1.0, {}, {}, {}, {}};
  for (const auto& r : data) {
    if (std::find(acc.groups.begin(), acc.groups.end(), r.model) == acc.groups.end()) acc.groups.push_back(r.model);
    if (std::find(acc.series.begin(), acc.series.end(), r.strategy) == acc.series.end()) acc.series.push_back(r.strategy);
  }
  time.groups = acc.groups;
  time.series = acc.series;
  acc.values.assign(acc.groups.size(), std::vector<std::optional<double>>(acc.series.size()));
  time.values = acc.values;
  double max_time = 0.0;
  for (const auto& r : data) {
    auto g = static_cast<std::size_t>(std::find(acc.groups.begin(), acc.groups.end(), r.model) - acc.groups.begin());
    auto s = static_cast<std::size_t>(std::find(acc.series.begin(), acc.series.end(), r.strategy) - acc.series.begin());
    acc.values[g][s] = r.pass_rate * 100.0;
    time.values[g][s] = r.total_time_s.value_or(0.0);
    max_time = std::max(max_time, r.total_time_s.value_or(0.0));
  }
  time.y_max = max_time > 0.0 ? max_time * 1.1 : 1.0;
  for (const auto& r : rows) {
    if (r.baseline) acc.reference_line = {r.model + " " + format_percent(r.pass_rate) + "%", r.pass_rate * 100.0};
  }
  const double width = std::max(480.0, 120.0 + 110.0 * static_cast<double>(acc.groups.size()));
  std::ostringstream svg;
  svg << svg_open(width, 620.0);
  draw_panel(svg, acc, 0.0, width, 290.0);
  draw_panel(svg, time, 290.0, width, 290.0);
  draw_legend(svg, acc.series, 605.0);
  svg << "</svg>\n";
  return svg.str();
}

std::vector<fs::path> render_summary(const ReportSpec& spec) {
  spec.validate();
  auto runs = load_runs(spec.inputs);
  auto rows = summary_rows(runs, spec.baseline);
  fs::create_directories(spec.output_dir);
  std::vector<fs::path> written;
  if (spec.formats.count(Format::csv)) {
    written.push_back(spec.output_dir / "summary.csv");
    write_file(written.back(), summary_csv(rows));
  }
  if (spec.formats.count(Format::markdown)) {
    written.push_back(spec.output_dir / "summary.md");
    write_file(written.back(), summary_markdown(rows));
  }
  if (spec.formats.count(Format::svg)) {
    written.push_back(spec.output_dir / "summary.svg");
    write_file(written.back(), summary_svg(rows));
  }
  return written;
}

std::vector<Tier> present_tiers(std::span<const LoadedRun> runs) {
  std::set<Tier> seen;
  for (const auto& run : runs) {
    for (const auto& r : run.file.records) seen.insert(r.difficulty);
  }
  std::vector<Tier> tiers;
  for (Tier t : kAllTiers) {
    if (seen.count(t)) tiers.push_back(t);
  }
  return tiers;
}

namespace {

std::string tier_title(Tier t) {
  std::string s(to_string(t));
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string omitted_footnote(std::span<const Tier> tiers) {
  std::string note;
  for (Tier t : kAllTiers) {
    if (std::find(tiers.begin(), tiers.end(), t) != tiers.end()) continue;
    note += (note.empty() ? "" : ", ") + std::string(to_string(t));
  }
  return note.empty() ? note : "* Omitted (no tasks in the evaluated suite): " + note;
}

}  // namespace

std::string tier_csv(std::span<const SummaryRow> rows, std::span<const Tier> tiers) {
  std::string out = "model,strategy";
  for (Tier t : tiers) out += ",tier_" + std::string(to_string(t)) + "_pct";
  out += "\n";
  for (const auto& r : measured(rows)) {
    out += csv_cell(r.model) + "," + csv_cell(r.strategy);
    for (Tier t : tiers) out += "," + tier_cell(r, t);
    out += "\n";
  }
  return out;
}

std::string tier_markdown(std::span<const SummaryRow> rows, std::span<const Tier> tiers) {
  std::string out = "| Model | Strategy |";
  std::string rule = "|---|---|";
  for (Tier t : tiers) {
    out += " " + tier_title(t) + " (%) |";
    rule += "---:|";
  }
  out += "\n" + rule + "\n";
  for (const auto& r : measured(rows)) {
    out += "| " + md_cell(r.model) + " | " + md_cell(r.strategy) + " |";
    for (Tier t : tiers) out += " " + tier_cell(r, t) + " |";
    out += "\n";
  }
  auto note = omitted_footnote(tiers);
  if (!note.empty()) out += "\n" + note + "\n";
  return out;
}

std::string tier_svg(std::span<const SummaryRow> rows, std::span<const Tier> tiers) {
  BarPanel p{"Pass@1 accuracy by difficulty tier (%)", "%", 100.0, {}, {}, {}, {}};
  for (Tier t : tiers) p.series.push_back(tier_title(t));
  for (const auto& r : measured(rows)) {
    p.groups.push_back(r.model + " / " + r.strategy);
    std::vector<std::optional<double>> v;
    for (Tier t : tiers) {
      auto it = r.tier_pass_rate.find(t);
      v.push_back(it == r.tier_pass_rate.end() ? std::optional<double>() : it->second * 100.0);
    }
    p.values.push_back(std::move(v));
  }
  const double width = std::max(480.0, 120.0 + 160.0 * static_cast<double>(p.groups.size()));
  std::ostringstream svg;
  svg << svg_open(width, 360.0);
  draw_panel(svg, p, 0.0, width, 310.0);
  draw_legend(svg, p.series, 330.0);
  auto note = omitted_footnote(tiers);
  if (!note.empty()) svg << "<text x=\"70\" y=\"352\" font-size=\"11\">" << xml_escape(note) << "</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

std::vector<fs::path> render_tier_breakdown(const ReportSpec& spec) {
  spec.validate();
  auto runs = load_runs(spec.inputs);
  auto rows = summary_rows(runs, std::nullopt);
  auto tiers = present_tiers(runs);
  fs::create_directories(spec.output_dir);
  std::vector<fs::path> written;
  if (spec.formats.count(Format::csv)) {
    written.push_back(spec.output_dir / "tiers.csv");
    write_file(written.back(), tier_csv(rows, tiers));
  }
  if (spec.formats.count(Format::markdown)) {
    written.push_back(spec.output_dir / "tiers.md");
    write_file(written.back(), tier_markdown(rows, tiers));
  }
  if (spec.formats.count(Format::svg)) {
    written.push_back(spec.output_dir / "tiers.svg");
    write_file(written.back(), tier_svg(rows, tiers));
  }
  return written;
}

ConsistencyReport consistency_check(std::span<const fs::path> run_files) {
  if (run_files.size() < 2) throw ReportError("consistency check needs >= 2 runs");
  auto runs = load_runs(run_files);
  for (std::size_t i = 1; i < runs.size(); ++i) {
    if (runs[i].file.header.config_hash != runs[0].file.header.config_hash) {
      throw ReportError("config hash mismatch: " + runs[0].path.string() + " (" +
                        runs[0].file.header.config_hash + ") vs " + runs[i].path.string() + " (" +
                        runs[i].file.header.config_hash + ")");
    }
  }
  ConsistencyReport rep;
  std::map<std::string, std::set<std::string>> outcomes;  // task_id -> distinct per-run outcome strings
  for (const auto& run : runs) {
    rep.runs.push_back(run.path.string());
    rep.pass_rates.push_back(summarize(run.file.records).overall_pass_rate);
    std::map<std::string, std::string> per_task;
    for (const auto& r : run.file.records) per_task[r.task_id] += r.passed() ? 'P' : 'F';
    for (auto& [id, o] : per_task) outcomes[id].insert(o);
  }
  auto [lo, hi] = std::minmax_element(rep.pass_rates.begin(), rep.pass_rates.end());
  rep.min = *lo;
  rep.max = *hi;
  rep.mean = std::accumulate(rep.pass_rates.begin(), rep.pass_rates.end(), 0.0) /
             static_cast<double>(rep.pass_rates.size());
  rep.spread = rep.max - rep.min;
  for (const auto& [id, set] : outcomes) {
    if (set.size() > 1) rep.disagreements.push_back(id);
  }
  return rep;
}

std::string consistency_markdown(const ConsistencyReport& rep) {
  std::ostringstream out;
  out << "| Run | Pass@1 (%) |\n|---|---:|\n";
  for (std::size_t i = 0; i < rep.runs.size(); ++i) {
    out << "| " << md_cell(rep.runs[i]) << " | " << format_percent(rep.pass_rates[i]) << " |\n";
  }
  out << "\nmin " << format_percent(rep.min) << "%, max " << format_percent(rep.max) << "%, mean "
      << format_percent(rep.mean) << "%, spread " << std::setprecision(6) << rep.spread << " ("
      << format_percent(rep.spread) << " points)\n";
  out << "\nTasks with differing outcomes: " << rep.disagreements.size() << "\n";
  for (const auto& id : rep.disagreements) out << "- " << id << "\n";
  return out.str();
}

}  // namespace qeval::report
