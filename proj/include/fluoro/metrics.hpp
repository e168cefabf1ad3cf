#pragma once

#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fluoro/common.hpp"
#include "fluoro/curve.hpp"

namespace fluoro {

// Index-corresponded points of two curves, both resampled to n equal
// arc-length points, distal-first. Meters.
struct CurvePairs {
  std::vector<Vec3> a;
  std::vector<Vec3> b;
};

CurvePairs correspond(const Curve3D& a, const Curve3D& b, int n);

// All reported in millimeters.
double max_ed_mm(const CurvePairs& pairs);   // max over pairs of |a_i - b_i|
double mete_mm(const CurvePairs& pairs);     // tip (index 0) distance
double mers_mm(const CurvePairs& pairs);     // mean over pairs of |a_i - b_i|

struct MetricStats {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
};

MetricStats aggregate(std::span<const double> values);

// Mean error per segment index across samples, distal (index 0) to proximal.
std::vector<double> segment_error_profile_mm(std::span<const CurvePairs> dataset);

struct ShapeErrorReport {
  std::string method;
  int samples = 0;
  std::vector<double> per_sample_max_ed_mm;
  std::vector<double> per_sample_mete_mm;
  std::vector<double> per_sample_mers_mm;
  MetricStats max_ed;
  MetricStats mete;
  MetricStats mers;
  std::vector<double> segment_profile_mm;
};

// Corresponds each truth/estimate pair at n points and fills a report.
// Per-sample metric evaluation runs in parallel; aggregation order is fixed.
ShapeErrorReport evaluate_curves(const std::string& method, std::span<const Curve3D> truth,
                                 std::span<const Curve3D> estimate, int n);

// Per-sample rows followed by a mean +/- std aggregate per method.
void write_report_text(std::ostream& out, std::span<const ShapeErrorReport> reports);
void write_report_csv(const std::filesystem::path& path,
                      std::span<const ShapeErrorReport> reports);

// CSV `segment,mean_error_mm`.
void write_profile_csv(const std::filesystem::path& path, std::span<const double> profile_mm);

}  // namespace fluoro
