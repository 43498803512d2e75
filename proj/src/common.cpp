#include "cbanet/common.hpp"

namespace cbanet {

const char* class_name(EventClass c) {
  switch (c) {
    case EventClass::Normal: return "normal";
    case EventClass::HarshAccel: return "harsh_accel";
    case EventClass::HarshBrake: return "harsh_brake";
    case EventClass::HarshTurn: return "harsh_turn";
  }
  return "unknown";
}

EventClass class_from_name(const std::string& name) {
  if (name == "normal") return EventClass::Normal;
  if (name == "harsh_accel" || name == "accel") return EventClass::HarshAccel;
  if (name == "harsh_brake" || name == "brake") return EventClass::HarshBrake;
  if (name == "harsh_turn" || name == "turn") return EventClass::HarshTurn;
  throw Error(ErrorCode::UnparsableValue, "unknown class name '" + name + "'");
}

const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::NonMonotonicTime: return "NonMonotonicTime";
    case ErrorCode::NonUniformSampling: return "NonUniformSampling";
    case ErrorCode::UnparsableValue: return "UnparsableValue";
    case ErrorCode::InfeasibleEvent: return "InfeasibleEvent";
    case ErrorCode::EmptySignal: return "EmptySignal";
    case ErrorCode::EmptyTrainingPool: return "EmptyTrainingPool";
    case ErrorCode::ChannelMismatch: return "ChannelMismatch";
    case ErrorCode::NotTrainingData: return "NotTrainingData";
    case ErrorCode::SessionTooShort: return "SessionTooShort";
    case ErrorCode::ClassTooSmall: return "ClassTooSmall";
    case ErrorCode::UnknownGroupId: return "UnknownGroupId";
    case ErrorCode::TooFewGroups: return "TooFewGroups";
    case ErrorCode::NotTrainingSplit: return "NotTrainingSplit";
    case ErrorCode::DegenerateClass: return "DegenerateClass";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::StaleCache: return "StaleCache";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::EmptySplit: return "EmptySplit";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::SingleClassTruth: return "SingleClassTruth";
    case ErrorCode::EmptyTestSet: return "EmptyTestSet";
    case ErrorCode::MissingInput: return "MissingInput";
    case ErrorCode::UnknownSubcommand: return "UnknownSubcommand";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Error";
}

bool is_validation_error(ErrorCode c) {
  switch (c) {
    case ErrorCode::DivergedLoss:
    case ErrorCode::StaleCache:
    case ErrorCode::IoError:
      return false;
    default:
      return true;
  }
}

}  // namespace cbanet
