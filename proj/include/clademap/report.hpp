#pragma once

#include "clademap/assoc_bayes.hpp"
#include "clademap/data_model.hpp"
#include "clademap/treesim.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace clademap {

struct TrackPoint {
  std::int64_t position = 0;
  double log10_bf1 = 0.0;
  double log10_bf2 = 0.0;
};

struct MapTracePoint {
  std::int64_t position = 0;
  double cm = 0.0;
};

struct RegionReport {
  std::vector<TrackPoint> track;
  std::vector<MapTracePoint> map_trace;
  std::int64_t focal_position = 0;
  /// The scan result at the focal position.
  BayesResult focal;
  MarginalTree tree;
  /// Tips in plotting order (clades contiguous).
  std::vector<int> tip_order;
  /// Panel sites shown in the haplotype matrix.
  std::vector<std::size_t> slice_sites;
  std::vector<std::int64_t> slice_positions;
  /// slice_alleles[h][j]: allele of haplotype h at slice site j.
  std::vector<std::vector<std::uint8_t>> slice_alleles;
  /// Carrier class of each haplotype under the best pair (index into the pair table columns).
  std::vector<int> pair_class;
  std::vector<std::string> pair_class_names;
};

/// Focal position is the largest log10 BF2 in [from_bp, to_bp] (leftmost on ties).
/// Throws InputError if the region has no successfully computed position.
RegionReport make_region_report(const std::vector<BayesResult>& results, const std::vector<MarginalTree>& trees,
                                const HaplotypePanel& panel, const RecombinationMap& map, std::int64_t from_bp,
                                std::int64_t to_bp, std::size_t slice_half_width = 40);

/// Values are rounded to three decimals; the SVG prints exactly these values.
double report_round(double value);

std::string region_report_json(const RegionReport& report);
std::string region_report_svg(const RegionReport& report);

/// Reads the JSON written by scan_json back into results (tables and tip masks included).
std::vector<BayesResult> read_scan_json(const std::string& text, std::size_t n_tips);

}  // namespace clademap
