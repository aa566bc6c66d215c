#pragma once

#include "fss/nn/graph.hpp"
#include "fss/rng.hpp"

#include <string>
#include <vector>

namespace fss::nn {

class Linear {
 public:
  Linear(std::string name, int in_dim, int out_dim);

  void init(Rng& rng);
  Var apply(Graph& g, Var x) const;  // W x + b, x is in_dim x n
  void collect(std::vector<Parameter*>& out);

  Parameter& weight() const { return W_; }
  Parameter& bias() const { return b_; }
  int in_dim() const { return static_cast<int>(W_.value.cols()); }
  int out_dim() const { return static_cast<int>(W_.value.rows()); }

 private:
  mutable Parameter W_, b_;
};

/// One direction of a gated recurrent layer.  Gate pre-activations for the
/// whole sequence are computed as a single GEMM; the recurrence itself runs
/// step by step.
struct GruCell {
  GruCell(const std::string& name, int in_dim, int hidden);

  void init(Rng& rng);
  void collect(std::vector<Parameter*>& out);

  /// x is in_dim x T; returns hidden x T (reversed=false walks t ascending).
  Var run(Graph& g, Var x, bool reversed) const;

  int in_dim;
  int hidden;
  mutable Parameter W;     // 3h x in   (rows: update, reset, candidate)
  mutable Parameter U_zr;  // 2h x h
  mutable Parameter U_c;   // h x h
  mutable Parameter b;     // 3h x 1
};

/// Bidirectional gated recurrent encoder.  Output dimension is
/// 2 * hidden per frame; output length equals input length.
class BiRecurrentEncoder {
 public:
  BiRecurrentEncoder(std::string name, int input_dim, int hidden, int n_layers);

  void init(Rng& rng);
  void collect(std::vector<Parameter*>& out);

  /// in: input_dim x T -> 2*hidden x T.
  Var encode_sequence(Graph& g, Var x) const;
  /// Final forward state stacked on final backward state: 2*hidden x 1.
  Var encode_final(Graph& g, Var x) const;

  int output_dim() const { return 2 * hidden_; }
  int input_dim() const { return input_dim_; }

 private:
  int input_dim_;
  int hidden_;
  std::vector<GruCell> fwd_, bwd_;
};

/// The proposal feature stack: conv (same padding) -> max pool -> conv
/// layers, with exact bookkeeping of how feature-map positions map back to
/// original frame centers.
class ConvPoolStack {
 public:
  struct Spec {
    int in_channels = 64;
    int conv1_channels = 96;
    int conv1_kernel = 8;
    int pool_kernel = 8;
    int pool_stride = 4;
    int conv2_channels = 64;
    int conv2_kernel = 3;
    int conv3_channels = 64;
    int conv3_kernel = 3;
  };

  ConvPoolStack(std::string name, const Spec& spec);

  void init(Rng& rng);
  void collect(std::vector<Parameter*>& out);

  /// x is in_channels x T; throws when T is shorter than the pooling
  /// window.  Output is out_channels() x output_length(T).
  Var apply(Graph& g, Var x) const;

  int output_length(int T) const;
  int min_input_length() const { return spec_.pool_kernel; }
  int out_channels() const { return spec_.conv3_channels; }

  /// Total frame stride between adjacent feature-map positions.
  int stride() const { return spec_.pool_stride; }
  /// Center (in original frame coordinates, possibly fractional) of the
  /// receptive field of feature-map position j.
  double frame_center(int j) const;
  /// Inclusive receptive-field bounds of position j, unclipped.
  std::pair<int, int> receptive_field(int j) const;

 private:
  Spec spec_;
  Linear conv1_w_, conv2_w_, conv3_w_;  // weights stored as Cout x (Cin*k)
  // receptive field of output j is [stride*j + rf_lo_, stride*j + rf_hi_]
  int rf_lo_ = 0, rf_hi_ = 0;
};

}  // namespace fss::nn
