#pragma once

#include <stdexcept>
#include <string>

namespace occamnas {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// archspace
struct SpatiallyInfeasible : Error { using Error::Error; };

// resmodel
struct UnknownPreset : Error { using Error::Error; };

// search
struct InfeasibleStart : Error { using Error::Error; };
struct Exhausted : Error { using Error::Error; };
struct EvaluationFailed : Error { using Error::Error; };
struct MissingOracleEntry : Error { using Error::Error; };

// engine
struct ShapeMismatch : Error { using Error::Error; };
struct NonFiniteActivation : Error { using Error::Error; };
struct NonFiniteGradient : Error { using Error::Error; };

// dataio
struct BadMagic : Error { using Error::Error; };
struct TruncatedFile : Error { using Error::Error; };
struct CountMismatch : Error { using Error::Error; };
struct EmptyClassDir : Error { using Error::Error; };
struct UndecodableImage : Error { using Error::Error; };
struct ClassTooSmall : Error { using Error::Error; };
struct EmptyDataset : Error { using Error::Error; };

} // namespace occamnas
