#pragma once

#include <stdexcept>
#include <string>

namespace gradnet {

/// Base for all domain errors; `kind()` is the stable machine-readable name
/// reported on stderr by the CLI.
class Error : public std::runtime_error {
  public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(kind + ": " + message), kind_(std::move(kind)) {}

    const std::string& kind() const { return kind_; }

  private:
    std::string kind_;
};

#define GRADNET_DEFINE_ERROR(Name)                                              \
    class Name : public Error {                                                 \
      public:                                                                   \
        explicit Name(const std::string& message) : Error(#Name, message) {}    \
    }

GRADNET_DEFINE_ERROR(SchemaError);
GRADNET_DEFINE_ERROR(ExprParseError);
GRADNET_DEFINE_ERROR(UnboundVariable);
GRADNET_DEFINE_ERROR(TableShapeError);
GRADNET_DEFINE_ERROR(AxisNotMonotonic);
GRADNET_DEFINE_ERROR(TableNotFound);
GRADNET_DEFINE_ERROR(EvalDomainError);
GRADNET_DEFINE_ERROR(ElementUnknownPort);
GRADNET_DEFINE_ERROR(ParamResolutionError);
GRADNET_DEFINE_ERROR(GalvUnsupported);
GRADNET_DEFINE_ERROR(AcUnsupported);
GRADNET_DEFINE_ERROR(TopHasExternalNodes);
GRADNET_DEFINE_ERROR(ArityError);
GRADNET_DEFINE_ERROR(UnsupportedAnalysis);
GRADNET_DEFINE_ERROR(SingularJacobian);
GRADNET_DEFINE_ERROR(NoConvergence);
GRADNET_DEFINE_ERROR(SpecError);
GRADNET_DEFINE_ERROR(CornerTableMissing);

#undef GRADNET_DEFINE_ERROR

/// Malformed JSON; carries 1-based line/column of the offending byte.
class SyntaxError : public Error {
  public:
    SyntaxError(const std::string& message, int line, int column)
        : Error("SyntaxError",
                message + " at line " + std::to_string(line) + ", column " + std::to_string(column)),
          line_(line),
          column_(column) {}

    int line() const { return line_; }
    int column() const { return column_; }

  private:
    int line_;
    int column_;
};

}  // namespace gradnet
