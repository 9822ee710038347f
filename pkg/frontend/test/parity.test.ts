/**
 * Bindings parity: a full baseline episode driven through the HTTP client
 * must match the server's native rollout within 1e-6 relative on
 * observations, rewards and cumulative CO2.
 */

import assert from "node:assert/strict";
import { after, before, test } from "node:test";

import { DccEnvClient, DccEnvError, type Observations } from "../src/client.js";
import { startServer, type ServerProcess } from "./server.js";

let server: ServerProcess;
let client: DccEnvClient;

before(async () => {
  server = await startServer();
  client = new DccEnvClient(server.baseUrl);
});

after(async () => {
  await server.stop();
});

const REL_TOL = 1e-6;

function assertClose(actual: number, expected: number, context: string): void {
  const scale = Math.max(1e-9, Math.abs(expected));
  assert.ok(
    Math.abs(actual - expected) <= REL_TOL * scale,
    `${context}: ${actual} != ${expected} (rel ${Math.abs(actual - expected) / scale})`,
  );
}

function assertObsClose(actual: Observations, expected: Observations, context: string): void {
  for (const level of ["top", "low", "cooling"] as const) {
    const a = actual[level];
    const e = expected[level];
    assert.equal(a.length, e.length, `${context}: ${level} length`);
    for (let i = 0; i < a.length; i += 1) {
      assertClose(a[i], e[i], `${context}: ${level}[${i}]`);
    }
  }
}

test("health reports the expected api version", async () => {
  const body = await client.health();
  assert.equal(body.api_version, "dcc_env_v1");
});

test("bundled three-DC scenario exposes the documented dimensions", async () => {
  const handle = await client.makeEnv("triad", 0);
  assert.equal(handle.dims.top.obs_dim, 31);
  assert.equal(handle.dims.top.act_dim, 3);
  assert.equal(handle.dims.low.obs_dim, 30);
  assert.equal(handle.dims.cooling.obs_dim, 18);
  await client.close(handle);
});

test("bad scenario raises the native error name", async () => {
  await assert.rejects(
    () => client.makeEnv("not_a_scenario", 0),
    (error: unknown) => error instanceof DccEnvError && error.nativeName === "ConfigError",
  );
});

test("wrong action length is rejected client-side", async () => {
  const handle = await client.makeEnv("tiny_a", 0);
  await assert.rejects(
    () => client.step(handle, { top: [0.1] }),
    (error: unknown) => error instanceof DccEnvError && error.nativeName === "DomainError",
  );
  await client.close(handle);
});

test("same seed produces identical initial observations", async () => {
  const a = await client.makeEnv("tiny_a", 7);
  const b = await client.makeEnv("tiny_a", 7);
  assert.deepEqual(a.initialObservations, b.initialObservations);
  await client.close(a);
  await client.close(b);
});

test("closed handles are invalid", async () => {
  const handle = await client.makeEnv("tiny_a", 0);
  await client.close(handle);
  await assert.rejects(
    () => client.step(handle, {}),
    (error: unknown) => error instanceof DccEnvError && error.nativeName === "UnknownEnv",
  );
});

test("full baseline episode matches the native rollout", async () => {
  const native = await client.rollout("triad", {
    seed: 0,
    policy: "baseline",
    includeObservations: true,
  });
  assert.ok(native.observations, "rollout must include observations");

  const handle = await client.makeEnv("triad", 0);
  assertObsClose(handle.initialObservations, native.observations![0], "initial obs");

  let cumulativeCo2 = 0;
  let done = false;
  let step = 0;
  while (!done) {
    const result = await client.step(handle, handle.baselineActions);
    assertClose(result.rewards.top, native.rewards_top[step], `reward[${step}]`);
    assertObsClose(result.observations, native.observations![step + 1], `obs[${step}]`);
    cumulativeCo2 += -result.rewards.top * native.reward_scale;
    done = result.done;
    step += 1;
  }
  assert.equal(step, native.steps);
  assertClose(cumulativeCo2, native.total_co2_kg, "cumulative CO2");
  await client.close(handle);
});
