#pragma once

#include <optional>
#include <vector>

#include "dkg/types.hpp"

namespace dkg {

struct DirectionalObservation {
  Vector direction;  // unit norm
  double value = 0.0;
};

/// One evaluation: a location plus whichever channels were observed there.
struct ObservationRecord {
  Vector location;
  std::optional<double> value;
  /// Either empty (no partials) or one slot per input dimension.
  std::vector<std::optional<double>> partials;
  std::optional<DirectionalObservation> directional;

  Index dim() const { return location.size(); }
  Index channel_count() const;

  /// Throws ContractViolation on a malformed record. When a box is given the
  /// location must lie inside it.
  void validate(Index dim, const Box* domain = nullptr) const;

  static ObservationRecord value_only(Vector x, double y);
  static ObservationRecord full(Vector x, double y, const Vector& gradient);
};

/// The observed channels of a record as rows of linear functionals over
/// (f, grad f), in the order value, partials (ascending), directional.
struct ChannelSet {
  Matrix functionals;  // k x (d+1)
  Vector observed;     // k
};

ChannelSet channels_of(const ObservationRecord& record);

}  // namespace dkg
