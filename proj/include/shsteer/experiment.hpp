// Copyright 2026 The shsteer Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "shsteer/config.hpp"
#include "shsteer/design.hpp"
#include "shsteer/metrics.hpp"
#include "shsteer/sim_engine.hpp"
#include "shsteer/stats.hpp"

namespace shsteer {

// One row of metrics.csv. Subjects are numbered from 1.
struct TrialResult {
  int subject = 0;
  AuthorityMode condition = AuthorityMode::Manual;
  int trial = 0;     // repetition within the condition, from 1
  int sequence = 0;  // position in the subject's run order, from 1
  bool aborted = false;
  std::string failure;
  std::optional<TrialMetrics> metrics;
};

struct SubjectRecord {
  SubjectSetup setup;
  std::vector<AuthorityMode> order;
};

struct BatchResult {
  std::vector<SubjectRecord> subjects;
  std::vector<TrialResult> trials;  // subject-major, then run order

  int failed() const {
    return static_cast<int>(std::count_if(trials.begin(), trials.end(), [](const TrialResult& t) { return t.aborted; }));
  }
  // Batch counts as failed when more than 10 % of trials abort.
  bool failure_rate_exceeded() const { return failed() * 10 > static_cast<int>(trials.size()); }
};

inline std::vector<AuthorityMode> condition_order(const ExperimentPlan& plan, int subject) {
  if (plan.ordering == Ordering::Fixed) return plan.conditions;
  const int k = static_cast<int>(plan.conditions.size());
  const auto rows = latin_squares(k, plan.subjects);
  std::vector<AuthorityMode> out;
  for (int idx : rows.at(subject - 1)) out.push_back(plan.conditions[idx]);
  return out;
}

inline std::string trial_stem(int subject, AuthorityMode mode, int trial) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "s%02d_%s_t%d", subject, std::string(mode_name(mode)).c_str(), trial);
  return buf;
}

// Runs every subject x condition x trial of the plan. Subjects are spread
// over worker threads; each trial depends only on the configuration and its
// own seeds, so the result does not depend on the thread count.
inline BatchResult run_batch(const ExperimentConfig& cfg, const std::filesystem::path& log_dir = {}) {
  cfg.validate();
  const auto& plan = cfg.plan;
  const TargetPath path = make_path(cfg.sim);

  BatchResult result;
  result.subjects.resize(plan.subjects);
  std::vector<std::vector<TrialResult>> per_subject(plan.subjects);
  std::mutex io;

  const auto run_subject = [&](int index) {
    const int id = index + 1;
    SubjectRecord rec{prepare_subject(cfg.sim, id), condition_order(plan, id)};
    auto& rows = per_subject[index];
    int sequence = 0;
    for (AuthorityMode mode : rec.order) {
      SimConfig sim = cfg.sim;
      sim.guidance.mode = mode;
      for (int t = 1; t <= plan.trials_per_condition; ++t) {
        TrialLog log = run_trial(sim, path, rec.setup, t);
        TrialResult row{id, mode, t, ++sequence, log.meta.aborted, log.meta.failure, std::nullopt};
        if (!row.aborted && sim.track_kind == TrackKind::DoubleLaneChange) {
          row.metrics = compute_trial_metrics(log, sim.track);
        }
        if (plan.write_logs && !log_dir.empty()) {
          std::lock_guard lock(io);
          write_trial_files(log_dir, trial_stem(id, mode, t), log);
        }
        rows.push_back(std::move(row));
      }
    }
    result.subjects[index] = std::move(rec);
  };

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const int workers = std::clamp(plan.threads > 0 ? plan.threads : static_cast<int>(hw), 1, plan.subjects);
  if (workers == 1) {
    for (int i = 0; i < plan.subjects; ++i) run_subject(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (int i = next++; i < plan.subjects; i = next++) run_subject(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  for (auto& rows : per_subject)
    for (auto& r : rows) result.trials.push_back(std::move(r));
  return result;
}

// ---------------------------------------------------------------------------
// CSV I/O
// ---------------------------------------------------------------------------

inline constexpr std::string_view kMetricsCsvHeader =
    "subject,condition,trial,sequence,aborted,lc1_fallback,lc2_fallback,rms_driver_torque,rms_swa,max_pos_swa,"
    "min_neg_swa,lateral_error_lc1,lateral_error_lc2,rms_normalized_semg";

inline void write_metrics_csv(std::ostream& os, const std::vector<TrialResult>& rows) {
  os << kMetricsCsvHeader << '\n';
  for (const auto& r : rows) {
    os << r.subject << ',' << mode_name(r.condition) << ',' << r.trial << ',' << r.sequence << ','
       << (r.aborted ? 1 : 0);
    if (r.metrics) {
      os << ',' << (r.metrics->lc1_fallback ? 1 : 0) << ',' << (r.metrics->lc2_fallback ? 1 : 0);
      for (Measure m : kAllMeasures) os << ',' << format_double(measure_value(*r.metrics, m));
    } else {
      os << ",,";
      for (std::size_t i = 0; i < kAllMeasures.size(); ++i) os << ',';
    }
    os << '\n';
  }
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline int parse_int(const std::string& text) {
  const double v = parse_double(text);
  if (v != std::floor(v)) throw FormatError("expected an integer, got '" + text + "'");
  return static_cast<int>(v);
}

inline std::vector<TrialResult> read_metrics_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kMetricsCsvHeader) throw FormatError("unexpected metrics CSV header");
  std::vector<TrialResult> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 14) throw FormatError("metrics CSV row needs 14 columns");
    TrialResult r;
    r.subject = parse_int(c[0]);
    const auto mode = parse_mode(c[1]);
    if (!mode) throw FormatError("unknown condition '" + c[1] + "'");
    r.condition = *mode;
    r.trial = parse_int(c[2]);
    r.sequence = parse_int(c[3]);
    r.aborted = parse_int(c[4]) != 0;
    if (!c[7].empty()) {
      TrialMetrics m;
      m.lc1_fallback = parse_int(c[5]) != 0;
      m.lc2_fallback = parse_int(c[6]) != 0;
      m.rms_driver_torque = parse_double(c[7]);
      m.rms_swa = parse_double(c[8]);
      m.max_pos_swa = parse_double(c[9]);
      m.min_neg_swa = parse_double(c[10]);
      m.lateral_error_lc1 = parse_double(c[11]);
      m.lateral_error_lc2 = parse_double(c[12]);
      m.rms_normalized_semg = parse_double(c[13]);
      r.metrics = m;
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

inline void write_subjects_csv(std::ostream& os, const std::vector<SubjectRecord>& subjects) {
  os << "subject,driver_seed,k_near,k_far,k_integral,lag,delay,torque_limit,semg_ref,noise_floor,order\n";
  for (const auto& s : subjects) {
    const auto& d = s.setup.driver;
    os << s.setup.id << ',' << s.setup.driver_seed << ',' << format_double(d.k_near) << ','
       << format_double(d.k_far) << ',' << format_double(d.k_integral) << ',' << format_double(d.lag) << ','
       << format_double(d.delay) << ',' << format_double(d.torque_limit) << ','
       << format_double(s.setup.calibration.reference) << ',' << format_double(s.setup.noise_floor) << ',';
    for (std::size_t i = 0; i < s.order.size(); ++i) os << (i ? ";" : "") << mode_name(s.order[i]);
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Subject-level aggregation and report
// ---------------------------------------------------------------------------

// Conditions present in the rows, in Table II order.
inline std::vector<AuthorityMode> present_conditions(const std::vector<TrialResult>& rows) {
  std::vector<AuthorityMode> out;
  for (AuthorityMode m : kAllModes) {
    if (std::any_of(rows.begin(), rows.end(), [&](const TrialResult& r) { return r.condition == m; })) {
      out.push_back(m);
    }
  }
  return out;
}

inline std::vector<int> present_subjects(const std::vector<TrialResult>& rows) {
  std::vector<int> out;
  for (const auto& r : rows) out.push_back(r.subject);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

struct SubjectMean {
  int subject = 0;
  AuthorityMode condition = AuthorityMode::Manual;
  int trials = 0;  // completed trials contributing
  std::array<double, kAllMeasures.size()> values{};
};

// Mean of each subject's completed trials per condition. Cells without a
// completed trial are omitted.
inline std::vector<SubjectMean> subject_means(const std::vector<TrialResult>& rows) {
  std::map<std::pair<int, int>, SubjectMean> acc;
  for (const auto& r : rows) {
    if (!r.metrics) continue;
    auto& m = acc[{r.subject, mode_index(r.condition)}];
    m.subject = r.subject;
    m.condition = r.condition;
    ++m.trials;
    for (std::size_t i = 0; i < kAllMeasures.size(); ++i) m.values[i] += measure_value(*r.metrics, kAllMeasures[i]);
  }
  std::vector<SubjectMean> out;
  for (auto& [key, m] : acc) {
    for (auto& v : m.values) v /= m.trials;
    out.push_back(m);
  }
  return out;
}

inline void write_subject_means_csv(std::ostream& os, const std::vector<SubjectMean>& means) {
  os << "subject,condition,trials";
  for (Measure m : kAllMeasures) os << ',' << measure_key(m);
  os << '\n';
  for (const auto& m : means) {
    os << m.subject << ',' << mode_name(m.condition) << ',' << m.trials;
    for (double v : m.values) os << ',' << format_double(v);
    os << '\n';
  }
}

// Subject x condition matrix of one measure.
inline Matrix measure_matrix(const std::vector<TrialResult>& rows, Measure measure,
                             const std::vector<AuthorityMode>& conditions, const std::vector<int>& subjects) {
  const auto means = subject_means(rows);
  const auto mi = static_cast<std::size_t>(std::find(kAllMeasures.begin(), kAllMeasures.end(), measure) -
                                           kAllMeasures.begin());
  Matrix m(subjects.size(), std::vector<double>(conditions.size(), 0.0));
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    for (std::size_t j = 0; j < conditions.size(); ++j) {
      const auto it = std::find_if(means.begin(), means.end(), [&](const SubjectMean& s) {
        return s.subject == subjects[i] && s.condition == conditions[j];
      });
      if (it == means.end()) {
        throw IncompleteDesignError("subject " + std::to_string(subjects[i]) + " has no completed trial in " +
                                    std::string(mode_name(conditions[j])));
      }
      m[i][j] = it->values[mi];
    }
  }
  return m;
}

struct MeasureReport {
  Measure measure = Measure::RmsDriverTorque;
  std::vector<double> means;
  std::vector<double> sds;
  AnovaResult anova;
  std::optional<PosthocResult> posthoc;
};

struct Report {
  std::vector<AuthorityMode> conditions;
  std::vector<int> subjects;
  std::vector<MeasureReport> measures;
};

inline MeasureReport analyze_matrix(Measure measure, const Matrix& data, bool posthoc_always = true) {
  MeasureReport r;
  r.measure = measure;
  r.anova = rm_anova(data);
  r.means = r.anova.means;
  for (std::size_t j = 0; j < r.means.size(); ++j) {
    std::vector<double> column;
    for (const auto& row : data) column.push_back(row[j]);
    r.sds.push_back(sample_sd(column));
  }
  if (r.anova.k >= 3) {
    auto ph = fisher_hayter(r.anova, r.anova.n);
    if (posthoc_always || ph.omnibus_significant) r.posthoc = std::move(ph);
  }
  return r;
}

inline Report build_report(const std::vector<TrialResult>& rows, bool posthoc_always = true) {
  Report rep;
  rep.conditions = present_conditions(rows);
  rep.subjects = present_subjects(rows);
  if (rep.subjects.size() < 2 || rep.conditions.size() < 2) {
    throw IncompleteDesignError("statistics need at least two subjects and two conditions");
  }
  for (Measure m : kAllMeasures) {
    rep.measures.push_back(analyze_matrix(m, measure_matrix(rows, m, rep.conditions, rep.subjects), posthoc_always));
  }
  return rep;
}

inline constexpr std::string_view kReportCsvHeader = "measure,condition,n,mean,sd,F,df_condition,df_error,p,tier";
inline constexpr std::string_view kPosthocCsvHeader =
    "measure,condition_a,condition_b,mean_difference,q,p,tier,omnibus_significant";

inline void write_report_csv(std::ostream& os, const Report& rep) {
  os << kReportCsvHeader << '\n';
  for (const auto& m : rep.measures) {
    for (std::size_t j = 0; j < rep.conditions.size(); ++j) {
      os << measure_key(m.measure) << ',' << mode_name(rep.conditions[j]) << ',' << m.anova.n << ','
         << format_double(m.means[j]) << ',' << format_double(m.sds[j]) << ',' << format_double(m.anova.f) << ','
         << m.anova.df_condition << ',' << m.anova.df_error << ',' << format_double(m.anova.p) << ','
         << significance_tier(m.anova.p) << '\n';
    }
  }
}

inline void write_posthoc_csv(std::ostream& os, const Report& rep) {
  os << kPosthocCsvHeader << '\n';
  for (const auto& m : rep.measures) {
    if (!m.posthoc) continue;
    for (const auto& c : m.posthoc->pairs) {
      os << measure_key(m.measure) << ',' << mode_name(rep.conditions[c.a]) << ',' << mode_name(rep.conditions[c.b])
         << ',' << format_double(c.mean_difference) << ',' << format_double(c.q) << ',' << format_double(c.p) << ','
         << c.tier << ',' << (m.posthoc->omnibus_significant ? 1 : 0) << '\n';
    }
  }
}

// Table of means (SD) per condition with the omnibus p, followed by one
// pairwise tier matrix per measure.
inline std::string format_report_text(const Report& rep) {
  std::ostringstream os;
  os << "Means and standard deviations of the dependent measures (" << rep.subjects.size() << " subjects)\n\n";
  constexpr int label_w = 42;
  constexpr int cell_w = 18;
  os << std::left << std::setw(label_w) << "Measure";
  for (auto c : rep.conditions) os << std::setw(cell_w) << mode_name(c);
  os << "p\n";
  for (const auto& m : rep.measures) {
    os << std::setw(label_w) << measure_label(m.measure);
    for (std::size_t j = 0; j < m.means.size(); ++j) {
      char cell[64];
      std::snprintf(cell, sizeof cell, "%.3f (%.3f)", m.means[j], m.sds[j]);
      os << std::setw(cell_w) << cell;
    }
    char p[32];
    std::snprintf(p, sizeof p, "%.3f", m.anova.p);
    os << p << ' ' << significance_tier(m.anova.p) << '\n';
  }
  os << "\nFisher-Hayter pairwise comparisons (ns, + p<0.1, * p<0.05, ** p<0.01, *** p<0.001)\n";
  for (const auto& m : rep.measures) {
    if (!m.posthoc) continue;
    os << '\n' << measure_label(m.measure);
    if (!m.posthoc->omnibus_significant) os << "  [omnibus not significant; post hoc is exploratory]";
    os << '\n' << std::setw(14) << "";
    for (auto c : rep.conditions) os << std::setw(14) << mode_name(c);
    os << '\n';
    for (std::size_t a = 0; a < rep.conditions.size(); ++a) {
      os << std::setw(14) << mode_name(rep.conditions[a]);
      for (std::size_t b = 0; b < rep.conditions.size(); ++b) {
        const std::string cell =
            a == b ? "-" : std::string(m.posthoc->pair(static_cast<int>(a), static_cast<int>(b)).tier);
        os << std::setw(14) << cell;
      }
      os << '\n';
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Bundle
// ---------------------------------------------------------------------------

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
}

// Writes report.csv, posthoc.csv and report.txt next to metrics.csv.
// Returns the text report, or the reason no statistics could be computed.
inline std::string write_report_files(const std::filesystem::path& dir, const std::vector<TrialResult>& rows,
                                      bool posthoc_always = true) {
  try {
    const Report rep = build_report(rows, posthoc_always);
    std::ostringstream csv;
    write_report_csv(csv, rep);
    write_text_file(dir / "report.csv", csv.str());
    std::ostringstream ph;
    write_posthoc_csv(ph, rep);
    write_text_file(dir / "posthoc.csv", ph.str());
    const std::string text = format_report_text(rep);
    write_text_file(dir / "report.txt", text);
    return text;
  } catch (const IncompleteDesignError& e) {
    const std::string text = std::string("no statistics: ") + e.what() + '\n';
    write_text_file(dir / "report.txt", text);
    return text;
  }
}

// Results bundle layout:
//   logs/<stem>.csv, .meta.json, .emg.csv   per trial
//   metrics.csv, subjects.csv, subject_means.csv
//   report.csv, posthoc.csv, report.txt
inline BatchResult run_batch_to_dir(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  BatchResult result = run_batch(cfg, dir / "logs");
  std::ostringstream metrics;
  write_metrics_csv(metrics, result.trials);
  write_text_file(dir / "metrics.csv", metrics.str());
  std::ostringstream subjects;
  write_subjects_csv(subjects, result.subjects);
  write_text_file(dir / "subjects.csv", subjects.str());
  std::ostringstream means;
  write_subject_means_csv(means, subject_means(result.trials));
  write_text_file(dir / "subject_means.csv", means.str());
  write_report_files(dir, result.trials, cfg.plan.posthoc_always);
  return result;
}

}  // namespace shsteer
