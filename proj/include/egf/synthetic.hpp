#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "egf/graph.hpp"
#include "egf/online.hpp"

namespace egf {

enum class SignalMode { Kernel, Filter, WMean };

const char* to_string(SignalMode mode);
SignalMode signal_mode_from_string(const std::string& name);

struct SyntheticConfig {
  int starting_nodes = 100;      // N
  double edge_probability = 0.2; // p
  int edges_per_node = 5;        // P
  int horizon = 1000;            // T
  int order = 5;                 // K
  SignalMode mode = SignalMode::Filter;
  std::uint64_t seed = 1;
  double mask_fraction = 0.8;   // Filter-mode pretraining coverage
  double pretrain_ridge = 3.0;  // ridge for the Filter-mode generator fit
  int kernel_centers = 50;       // J
  double kernel_sigma2 = 1.0;
};

// Symmetric unweighted ER graph, each unordered pair included independently
// with probability p, then normalized by its spectral radius. An edgeless
// sample (p = 0) is returned as is.
ExpandingGraph erdos_renyi(int n, double p, std::uint64_t seed);
ExpandingGraph erdos_renyi_raw(int n, double p, std::uint64_t seed);

// P distinct targets drawn uniformly without replacement, all with the given
// weight (the median of the starting graph's normalized edge weights).
AttachmentVector sample_attachment(int current_nodes, int degree, double weight,
                                   std::mt19937_64& rng);

double median_edge_weight(const ExpandingGraph& g);

// Low-pass smoothed standard normal noise, rescaled to unit variance:
// x0 = sum_{k=0..2} (1/2)^k A^k w.
GraphSignal initial_signal(const ExpandingGraph& g0, std::uint64_t seed);

// Weighted-mean target at an incoming node; identical to wknn_predict.
double gen_wmean(const AttachmentVector& a, const GraphSignal& x);

struct SyntheticStream {
  ExpandingGraph graph0;
  GraphSignal x0;
  std::vector<TrainingEvent> events;
  double attachment_weight = 0.0;      // on the normalized-graph scale
  double raw_attachment_weight = 0.0;  // median of the raw starting-graph weights
  // Filter mode only: the planted generator filter (empty otherwise).
  FilterCoefficients generator_filter;
  std::uint64_t seed = 0;
  // Multiplier taking stored attachment weights back to the raw edge scale;
  // kernel-space methods consume the un-normalized attachment pattern.
  double raw_scale() const {
    return attachment_weight > 0.0 ? raw_attachment_weight / attachment_weight : 1.0;
  }
};

// The full experiment construction: starting graph, initial signal, and a
// T-event stream with targets from the configured generator.
SyntheticStream make_stream(const SyntheticConfig& cfg);

// Line-oriented event serialization: `t<TAB>x_true<TAB>i1:w1,i2:w2,...`.
std::string serialize_stream(std::span<const TrainingEvent> events);
// Attachment dimensions are reconstructed as n0 + t - 1.
std::vector<TrainingEvent> parse_stream(const std::string& text, int n0);

}  // namespace egf
