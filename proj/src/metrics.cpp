#include "fluoro/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "fluoro/parallel.hpp"
#include "fluoro/spline.hpp"

namespace fluoro {

CurvePairs correspond(const Curve3D& a, const Curve3D& b, int n) {
  CurvePairs pairs;
  pairs.a = resample_equal_arclength(fit_spline(a, 0.0), n).points;
  pairs.b = resample_equal_arclength(fit_spline(b, 0.0), n).points;
  return pairs;
}

double max_ed_mm(const CurvePairs& pairs) {
  double worst = 0.0;
  for (std::size_t i = 0; i < pairs.a.size(); ++i)
    worst = std::max(worst, (pairs.a[i] - pairs.b[i]).norm());
  return worst * 1000.0;
}

double mete_mm(const CurvePairs& pairs) { return (pairs.a.front() - pairs.b.front()).norm() * 1000.0; }

double mers_mm(const CurvePairs& pairs) {
  KahanSum sum;
  for (std::size_t i = 0; i < pairs.a.size(); ++i) sum.add((pairs.a[i] - pairs.b[i]).norm());
  return sum.value() / static_cast<double>(pairs.a.size()) * 1000.0;
}

MetricStats aggregate(std::span<const double> values) {
  MetricStats stats;
  if (values.empty()) return stats;
  KahanSum sum;
  for (double v : values) sum.add(v);
  stats.mean = sum.value() / static_cast<double>(values.size());
  if (values.size() > 1) {
    KahanSum sq;
    for (double v : values) sq.add((v - stats.mean) * (v - stats.mean));
    stats.stddev = std::sqrt(sq.value() / static_cast<double>(values.size() - 1));
  }
  return stats;
}

std::vector<double> segment_error_profile_mm(std::span<const CurvePairs> dataset) {
  if (dataset.empty()) return {};
  const std::size_t n = dataset.front().a.size();
  std::vector<double> profile(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    KahanSum sum;
    for (const CurvePairs& pairs : dataset) sum.add((pairs.a[i] - pairs.b[i]).norm());
    profile[i] = sum.value() / static_cast<double>(dataset.size()) * 1000.0;
  }
  return profile;
}

ShapeErrorReport evaluate_curves(const std::string& method, std::span<const Curve3D> truth,
                                 std::span<const Curve3D> estimate, int n) {
  if (truth.size() != estimate.size())
    throw std::invalid_argument("truth/estimate counts differ");
  ShapeErrorReport report;
  report.method = method;
  report.samples = static_cast<int>(truth.size());

  std::vector<CurvePairs> pairs(truth.size());
  parallel_for(static_cast<int>(truth.size()),
               [&](int i) { pairs[i] = correspond(truth[i], estimate[i], n); });

  report.per_sample_max_ed_mm.resize(truth.size());
  report.per_sample_mete_mm.resize(truth.size());
  report.per_sample_mers_mm.resize(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    report.per_sample_max_ed_mm[i] = max_ed_mm(pairs[i]);
    report.per_sample_mete_mm[i] = mete_mm(pairs[i]);
    report.per_sample_mers_mm[i] = mers_mm(pairs[i]);
  }
  report.max_ed = aggregate(report.per_sample_max_ed_mm);
  report.mete = aggregate(report.per_sample_mete_mm);
  report.mers = aggregate(report.per_sample_mers_mm);
  report.segment_profile_mm = segment_error_profile_mm(pairs);
  return report;
}

void write_report_text(std::ostream& out, std::span<const ShapeErrorReport> reports) {
  out << std::fixed << std::setprecision(3);
  for (const ShapeErrorReport& r : reports) {
    out << "# method: " << r.method << " (" << r.samples << " samples, errors in mm)\n";
    out << "sample  max_ed    mete    mers\n";
    for (int i = 0; i < r.samples; ++i) {
      out << std::setw(6) << i << "  " << std::setw(6) << r.per_sample_max_ed_mm[i] << "  "
          << std::setw(6) << r.per_sample_mete_mm[i] << "  " << std::setw(6)
          << r.per_sample_mers_mm[i] << '\n';
    }
    out << '\n';
  }
  out << "# aggregate (mean +/- std, mm)\n";
  out << "method          MaxED            METE             MERS\n";
  for (const ShapeErrorReport& r : reports) {
    out << std::setw(14) << std::left << r.method << std::right << "  " << std::setw(6)
        << r.max_ed.mean << " +/- " << std::setw(5) << r.max_ed.stddev << "  " << std::setw(6)
        << r.mete.mean << " +/- " << std::setw(5) << r.mete.stddev << "  " << std::setw(6)
        << r.mers.mean << " +/- " << std::setw(5) << r.mers.stddev << '\n';
  }
}

void write_report_csv(const std::filesystem::path& path,
                      std::span<const ShapeErrorReport> reports) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "method,samples,max_ed_mean_mm,max_ed_std_mm,mete_mean_mm,mete_std_mm,"
         "mers_mean_mm,mers_std_mm\n";
  for (const ShapeErrorReport& r : reports) {
    out << r.method << ',' << r.samples << ',' << format_double(r.max_ed.mean) << ','
        << format_double(r.max_ed.stddev) << ',' << format_double(r.mete.mean) << ','
        << format_double(r.mete.stddev) << ',' << format_double(r.mers.mean) << ','
        << format_double(r.mers.stddev) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void write_profile_csv(const std::filesystem::path& path, std::span<const double> profile_mm) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "segment,mean_error_mm\n";
  for (std::size_t i = 0; i < profile_mm.size(); ++i)
    out << i << ',' << format_double(profile_mm[i]) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace fluoro
