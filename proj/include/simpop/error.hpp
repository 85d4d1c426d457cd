#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace simpop {

// Base for every error raised by the library. The CLI maps subclasses of
// ValidationError to exit code 2 and everything else to exit code 3.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
  public:
    using Error::Error;
};

class MissingColumn : public ValidationError {
  public:
    explicit MissingColumn(std::string column)
      : ValidationError("missing column \"" + column + "\"")
      , column_(std::move(column)) {}
    const std::string& column() const { return column_; }

  private:
    std::string column_;
};

class ParseFailure : public ValidationError {
  public:
    ParseFailure(std::int64_t row, std::string column)
      : ValidationError("cannot parse row " + std::to_string(row) + ", column \"" + column + "\"")
      , row_(row)
      , column_(std::move(column)) {}
    std::int64_t row() const { return row_; }
    const std::string& column() const { return column_; }

  private:
    std::int64_t row_;
    std::string column_;
};

class DuplicateId : public ValidationError {
  public:
    explicit DuplicateId(std::int64_t id)
      : ValidationError("duplicate id " + std::to_string(id))
      , id_(id) {}
    std::int64_t id() const { return id_; }

  private:
    std::int64_t id_;
};

class MissingVariable : public ValidationError {
  public:
    explicit MissingVariable(const std::string& name)
      : ValidationError("unknown variable \"" + name + "\"") {}
};

class NonPositiveLogArgument : public Error {
  public:
    NonPositiveLogArgument(std::string variable, std::int64_t row)
      : Error("log argument not positive for \"" + variable + "\" at row " + std::to_string(row))
      , variable_(std::move(variable))
      , row_(row) {}
    const std::string& variable() const { return variable_; }
    std::int64_t row() const { return row_; }

  private:
    std::string variable_;
    std::int64_t row_;
};

class ZeroVariance : public Error {
  public:
    ZeroVariance(const std::string& stratum, const std::string& variable)
      : Error("zero variance for \"" + variable + "\" in stratum \"" + stratum + "\"") {}
};

class MissingConstants : public Error {
  public:
    MissingConstants(const std::string& stratum, const std::string& variable)
      : Error("no scaling constants for \"" + variable + "\" in stratum \"" + stratum + "\"") {}
};

class TooFewDonors : public Error {
  public:
    TooFewDonors(std::size_t donors, int k)
      : Error("index has " + std::to_string(donors) + " donors, fewer than k = " + std::to_string(k)) {}
};

class DimensionMismatch : public Error {
  public:
    using Error::Error;
};

class LengthMismatch : public Error {
  public:
    using Error::Error;
};

class EmptyCluster : public Error {
  public:
    explicit EmptyCluster(std::int64_t cluster)
      : Error("cluster " + std::to_string(cluster) + " has no sampling slots")
      , cluster_(cluster) {}
    std::int64_t cluster() const { return cluster_; }

  private:
    std::int64_t cluster_;
};

class RankDeficientDesign : public Error {
  public:
    using Error::Error;
};

class TooFewDomains : public Error {
  public:
    using Error::Error;
};

class ZeroTruth : public Error {
  public:
    explicit ZeroTruth(const std::string& domain)
      : Error("true mean is zero in domain \"" + domain + "\"") {}
};

class DegenerateMSE : public Error {
  public:
    using Error::Error;
};

class ProvenanceMissing : public Error {
  public:
    using Error::Error;
};

}  // namespace simpop
