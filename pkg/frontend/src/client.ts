/**
 * Client for the dcc_env_v1 environment-serving API.
 *
 * The server hosts simulation environments; this client creates handles,
 * steps them with flat per-level action vectors and reads flat observations
 * and rewards back. Native simulator errors cross the boundary as
 * DccEnvError with the originating exception name embedded.
 *
 * A handle belongs to one consumer and becomes invalid after close(); many
 * handles may coexist against one server.
 */

export const API_VERSION = "dcc_env_v1";

export interface LevelDims {
  obs_dim: number;
  act_dim: number;
}

export interface EnvDims {
  n_dcs: number;
  blade_groups: number[];
  episode_steps: number;
  top: LevelDims;
  low: LevelDims;
  cooling: LevelDims;
}

export interface Observations {
  top: number[];
  low: number[];
  cooling: number[];
}

/** Flat per-level action vectors; null (or absent) selects the level's default. */
export interface FlatActions {
  top?: number[] | null;
  low?: number[] | null;
  cooling?: number[] | null;
}

export interface Rewards {
  top: number;
  low: number[];
  cooling: number[];
}

export interface StepResult {
  observations: Observations;
  rewards: Rewards;
  done: boolean;
  info: Record<string, unknown>;
}

export interface RolloutResult {
  scenario: string;
  policy: string;
  steps: number;
  total_co2_kg: number;
  reward_scale: number;
  rewards_top: number[];
  co2_per_step: number[];
  observations: Observations[] | null;
}

export class EnvHandle {
  closed = false;

  constructor(
    readonly envId: string,
    readonly scenario: string,
    readonly dims: EnvDims,
    readonly baselineActions: FlatActions,
    readonly initialObservations: Observations,
  ) {}
}

/** Error carrying the native simulator exception name across the boundary. */
export class DccEnvError extends Error {
  constructor(
    readonly nativeName: string,
    message: string,
    readonly status: number,
  ) {
    super(`${nativeName}: ${message}`);
    this.name = "DccEnvError";
  }
}

async function parseError(response: Response): Promise<never> {
  let nativeName = "HttpError";
  let message = `${response.status} ${response.statusText}`;
  try {
    const body = (await response.json()) as { error?: string; message?: string };
    if (body.error) nativeName = body.error;
    if (body.message) message = body.message;
  } catch {
    // non-JSON error body: keep the HTTP status text
  }
  throw new DccEnvError(nativeName, message, response.status);
}

function checkLength(name: string, vector: number[] | null | undefined, expected: number): void {
  if (vector != null && vector.length !== expected) {
    throw new DccEnvError(
      "DomainError",
      `${name} action needs ${expected} entries, got ${vector.length}`,
      0,
    );
  }
}

export class DccEnvClient {
  constructor(readonly baseUrl: string) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`, {
      method,
      headers: { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      await parseError(response);
    }
    return (await response.json()) as T;
  }

  async health(): Promise<{ status: string; api_version: string }> {
    return this.request("GET", "/v1/health");
  }

  async scenarios(): Promise<string[]> {
    const body = await this.request<{ scenarios: string[] }>("GET", "/v1/scenarios");
    return body.scenarios;
  }

  async makeEnv(scenario: string, seed = 0): Promise<EnvHandle> {
    const body = await this.request<{
      env_id: string;
      api_version: string;
      scenario: string;
      dims: EnvDims;
      baseline_actions: FlatActions;
      observations: Observations;
    }>("POST", "/v1/envs", { scenario, seed });
    if (body.api_version !== API_VERSION) {
      throw new DccEnvError(
        "ApiVersionMismatch",
        `server speaks ${body.api_version}, client expects ${API_VERSION}`,
        0,
      );
    }
    return new EnvHandle(
      body.env_id,
      body.scenario,
      body.dims,
      body.baseline_actions,
      body.observations,
    );
  }

  async reset(handle: EnvHandle, seed = 0): Promise<Observations> {
    this.assertOpen(handle);
    const body = await this.request<{ observations: Observations }>(
      "POST",
      `/v1/envs/${handle.envId}/reset`,
      { seed },
    );
    return body.observations;
  }

  async step(handle: EnvHandle, actions: FlatActions): Promise<StepResult> {
    this.assertOpen(handle);
    checkLength("top", actions.top, handle.dims.top.act_dim);
    checkLength("low", actions.low, handle.dims.low.act_dim);
    checkLength("cooling", actions.cooling, handle.dims.cooling.act_dim);
    return this.request("POST", `/v1/envs/${handle.envId}/step`, actions);
  }

  async close(handle: EnvHandle): Promise<void> {
    if (handle.closed) return;
    await this.request("DELETE", `/v1/envs/${handle.envId}`);
    handle.closed = true;
  }

  async rollout(
    scenario: string,
    options: { seed?: number; policy?: string; includeObservations?: boolean } = {},
  ): Promise<RolloutResult> {
    return this.request("POST", "/v1/rollout", {
      scenario,
      seed: options.seed ?? 0,
      policy: options.policy ?? "baseline",
      include_observations: options.includeObservations ?? false,
    });
  }

  private assertOpen(handle: EnvHandle): void {
    if (handle.closed) {
      throw new DccEnvError("UnknownEnv", `handle ${handle.envId} is closed`, 0);
    }
  }
}
