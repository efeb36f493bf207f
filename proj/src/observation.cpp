#include "dkg/observation.hpp"

#include <cmath>
#include <sstream>

namespace dkg {

Index ObservationRecord::channel_count() const {
  Index count = value ? 1 : 0;
  for (const auto& p : partials) count += p ? 1 : 0;
  if (directional) ++count;
  return count;
}

void ObservationRecord::validate(Index d, const Box* domain) const {
  if (location.size() != d) {
    std::ostringstream msg;
    msg << "ObservationRecord: location has dimension " << location.size() << ", expected " << d;
    throw ContractViolation(msg.str());
  }
  require(location.allFinite(), "ObservationRecord: non-finite location");
  require(partials.empty() || static_cast<Index>(partials.size()) == d,
          "ObservationRecord: partial slots must match dimension");
  require(channel_count() > 0, "ObservationRecord: no observed channel");
  if (value) require(std::isfinite(*value), "ObservationRecord: non-finite value");
  for (const auto& p : partials) {
    if (p) require(std::isfinite(*p), "ObservationRecord: non-finite partial");
  }
  if (directional) {
    require(directional->direction.size() == d, "ObservationRecord: direction dimension mismatch");
    require(std::abs(directional->direction.norm() - 1.0) <= 1e-12,
            "ObservationRecord: direction must have unit norm");
    require(std::isfinite(directional->value), "ObservationRecord: non-finite directional value");
  }
  if (domain != nullptr) {
    require(domain->contains(location, 1e-12), "ObservationRecord: location outside the domain");
  }
}

ObservationRecord ObservationRecord::value_only(Vector x, double y) {
  ObservationRecord r;
  r.location = std::move(x);
  r.value = y;
  return r;
}

ObservationRecord ObservationRecord::full(Vector x, double y, const Vector& gradient) {
  ObservationRecord r;
  r.location = std::move(x);
  r.value = y;
  r.partials.resize(static_cast<std::size_t>(gradient.size()));
  for (Index i = 0; i < gradient.size(); ++i) r.partials[static_cast<std::size_t>(i)] = gradient[i];
  return r;
}

ChannelSet channels_of(const ObservationRecord& record) {
  const Index d = record.dim();
  const Index k = record.channel_count();
  ChannelSet out{Matrix::Zero(k, d + 1), Vector(k)};
  Index row = 0;
  if (record.value) {
    out.functionals(row, 0) = 1.0;
    out.observed[row++] = *record.value;
  }
  for (std::size_t i = 0; i < record.partials.size(); ++i) {
    if (!record.partials[i]) continue;
    out.functionals(row, static_cast<Index>(i) + 1) = 1.0;
    out.observed[row++] = *record.partials[i];
  }
  if (record.directional) {
    out.functionals.block(row, 1, 1, d) = record.directional->direction.transpose();
    out.observed[row++] = record.directional->value;
  }
  return out;
}

}  // namespace dkg
