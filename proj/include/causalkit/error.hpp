#pragma once

#include <stdexcept>
#include <string>

namespace causalkit {

/// Base class for every domain error raised by the library.
///
/// `name()` is a stable, machine-readable identifier (e.g. "CycleError")
/// which the command-line tool prints verbatim.
class Error : public std::runtime_error {
public:
    Error(std::string name, const std::string& message)
        : std::runtime_error(message), name_(std::move(name)) {}

    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

#define CAUSALKIT_DEFINE_ERROR(Type)                                           \
    class Type : public ::causalkit::Error {                                   \
    public:                                                                    \
        explicit Type(const std::string& message) : Error(#Type, message) {}   \
    }

// data
CAUSALKIT_DEFINE_ERROR(MissingFile);
CAUSALKIT_DEFINE_ERROR(HeaderMismatch);
CAUSALKIT_DEFINE_ERROR(CellParseError);
CAUSALKIT_DEFINE_ERROR(EmptyAfterClean);
CAUSALKIT_DEFINE_ERROR(SpecForCategoricalColumn);
CAUSALKIT_DEFINE_ERROR(UnknownColumn);
CAUSALKIT_DEFINE_ERROR(InvalidTable);
CAUSALKIT_DEFINE_ERROR(InvalidBinSpec);
CAUSALKIT_DEFINE_ERROR(ConfigError);

// graph
CAUSALKIT_DEFINE_ERROR(SelfLoop);
CAUSALKIT_DEFINE_ERROR(UnknownNode);
CAUSALKIT_DEFINE_ERROR(DuplicateNode);
CAUSALKIT_DEFINE_ERROR(MissingWeight);
CAUSALKIT_DEFINE_ERROR(InvalidStructure);

// discovery
CAUSALKIT_DEFINE_ERROR(ConditioningTooSparse);
CAUSALKIT_DEFINE_ERROR(NodeNotInData);

// elicitation
CAUSALKIT_DEFINE_ERROR(EmptyVariableList);
CAUSALKIT_DEFINE_ERROR(NoClaims);
CAUSALKIT_DEFINE_ERROR(NoClaimsFound);
CAUSALKIT_DEFINE_ERROR(InvalidClaim);
CAUSALKIT_DEFINE_ERROR(UnresolvedPair);

// validation
CAUSALKIT_DEFINE_ERROR(RankDeficient);
CAUSALKIT_DEFINE_ERROR(TooFewRows);

// bayesnet
CAUSALKIT_DEFINE_ERROR(ZeroCountNoSmoothing);
CAUSALKIT_DEFINE_ERROR(InconsistentEvidence);
CAUSALKIT_DEFINE_ERROR(UnknownLevel);
CAUSALKIT_DEFINE_ERROR(InvalidModel);

#undef CAUSALKIT_DEFINE_ERROR

}  // namespace causalkit
