#pragma once

#include <stdexcept>
#include <string>

namespace spatialspill {

enum class Err {
  // ingest
  MissingColumn,
  NonNumericCell,
  DuplicateId,
  EmptyTable,
  UnsupportedGeometryKind,
  MissingIdProperty,
  MalformedRing,
  BadHeader,
  UnknownNeighborId,
  NeighborCountMismatch,
  AsymmetricNeighbors,
  IdMismatch,
  // weights
  DegenerateGeometry,
  CoincidentCentroids,
  ZeroMatrix,
  // esda
  ConstantVector,
  ConstantColumn,
  LengthMismatch,
  // estimators
  SingularDesign,
  RankDeficientAfterLag,
  OutOfStationaryRegion,
  NonConvergence,
  DimensionMismatch,
  // cli
  MissingExternalData,
  IoError,
  FormatError,
};

const char* err_name(Err code) noexcept;

/// Library-wide exception; `name()` is the stable error identifier the CLI
/// prints before the message.
class Error : public std::runtime_error {
 public:
  Error(Err code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  Err code() const noexcept { return code_; }
  const char* name() const noexcept { return err_name(code_); }

 private:
  Err code_;
};

}  // namespace spatialspill
