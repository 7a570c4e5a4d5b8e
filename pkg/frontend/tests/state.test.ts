import { describe, expect, it } from "vitest";

import { ServerMsg } from "../src/protocol.js";
import {
  DECISION_LOG_LIMIT,
  applyMessage,
  initialState,
  latchClick,
  setConnection,
} from "../src/state.js";

function pgm(value: number): string {
  return Buffer.from([...Buffer.from("P5\n1 1\n255\n"), value]).toString("base64");
}

const hello: ServerMsg = {
  schema: 1, type: "hello", width: 128, height: 128,
  mode: "motion", duration: 15, tau: 0.1, lambda: 0.1,
};

function subframe(index: number, value: number): ServerMsg {
  return {
    schema: 1, type: "subframe", index, t_start: 0, t_end: 0.1,
    image_pgm: pgm(value), grid_overlay_pgm: pgm(0),
  };
}

describe("view state reducer", () => {
  it("hello sets the field geometry and knobs", () => {
    const s = applyMessage(initialState(), hello);
    expect(s.fieldWidth).toBe(128);
    expect(s.mode).toBe("motion");
    expect(s.tau).toBe(0.1);
  });

  it("the newest frame always wins", () => {
    let s = applyMessage(initialState(), hello);
    s = applyMessage(s, subframe(0, 10));
    s = applyMessage(s, subframe(1, 200));
    expect(s.subframeIndex).toBe(1);
    expect(s.subframe!.pixels[0]).toBeCloseTo(200 / 255, 6);
  });

  it("two rapid clicks: only the latest stays latched", () => {
    let s = latchClick(initialState(), 10, 10);
    s = latchClick(s, 30, 40);
    expect(s.pendingClick).toEqual({ x: 30, y: 40 });
  });

  it("a manual decision confirms the pending click", () => {
    let s = latchClick(initialState(), 30, 40);
    s = applyMessage(s, {
      schema: 1, type: "decision", t: 1.0, center: [30, 43], reason: "stochastic",
    });
    expect(s.pendingClick).not.toBeNull();
    s = applyMessage(s, {
      schema: 1, type: "decision", t: 1.5, center: [30, 43], reason: "manual",
    });
    expect(s.pendingClick).toBeNull();
    expect(s.decisions).toHaveLength(2);
  });

  it("bounds the decision log", () => {
    let s = initialState();
    for (let i = 0; i < DECISION_LOG_LIMIT + 50; i++) {
      s = applyMessage(s, {
        schema: 1, type: "decision", t: i, center: [16, 16], reason: "hold",
      });
    }
    expect(s.decisions).toHaveLength(DECISION_LOG_LIMIT);
    expect(s.decisions[0]!.t).toBe(50);
  });

  it("tracks status, errors, timing and end", () => {
    let s = applyMessage(initialState(), {
      schema: 1, type: "status", paused: true, mode: "wavelet", tau: 0.2, lambda: 0.5, p_jump: 0,
    });
    expect(s.paused).toBe(true);
    expect(s.mode).toBe("wavelet");
    s = applyMessage(s, { schema: 1, type: "error", message: "bad click" });
    expect(s.lastError).toBe("bad click");
    s = applyMessage(s, { schema: 1, type: "timing", report: { subframe_rate_hz: 8 } });
    s = applyMessage(s, { schema: 1, type: "end" });
    expect(s.ended).toBe(true);
    expect(s.timing).toEqual({ subframe_rate_hz: 8 });
  });

  it("connection status transitions", () => {
    const s = setConnection(initialState(), "open");
    expect(s.connection).toBe("open");
  });
});
