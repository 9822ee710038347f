export {
  API_VERSION,
  DccEnvClient,
  DccEnvError,
  EnvHandle,
} from "./client.js";
export type {
  EnvDims,
  FlatActions,
  LevelDims,
  Observations,
  Rewards,
  RolloutResult,
  StepResult,
} from "./client.js";
