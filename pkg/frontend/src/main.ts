/** DOM wiring for the live console. */

import { GatewayConnection, gatewayUrl } from "./connection.js";
import { canvasToField, fieldToCanvas } from "./coords.js";
import { drawClickMarker, drawImageData } from "./render.js";
import { ViewState, applyMessage, initialState, latchClick, setConnection } from "./state.js";

const $ = <T extends HTMLElement>(id: string) => document.getElementById(id) as T;

const subframeCanvas = $<HTMLCanvasElement>("subframe");
const compositeCanvas = $<HTMLCanvasElement>("composite");
const blipCanvas = $<HTMLCanvasElement>("blip");
const statusDot = $<HTMLSpanElement>("status");
const modeSelect = $<HTMLSelectElement>("mode");
const tauInput = $<HTMLInputElement>("tau");
const lambdaInput = $<HTMLInputElement>("lambda");
const pJumpInput = $<HTMLInputElement>("pjump");
const pauseButton = $<HTMLButtonElement>("pause");
const gridToggle = $<HTMLInputElement>("grid-toggle");
const exposureToggle = $<HTMLInputElement>("exposure-toggle");
const decisionLog = $<HTMLUListElement>("decisions");
const errorLine = $<HTMLDivElement>("error");

let state: ViewState = initialState();
let dirty = false;

function update(next: ViewState): void {
  state = next;
  if (!dirty) {
    dirty = true;
    requestAnimationFrame(render);
  }
}

const connection = new GatewayConnection(gatewayUrl(window.location), {
  onMessage: (msg) => update(applyMessage(state, msg)),
  onStatus: (s) => update(setConnection(state, s)),
  onProtocolError: (detail) => update({ ...state, lastError: detail }),
});

function render(): void {
  dirty = false;
  statusDot.dataset.state = state.ended ? "ended" : state.connection;
  statusDot.title = state.ended ? "session ended" : state.connection;
  errorLine.textContent = state.lastError ?? "";
  pauseButton.textContent = state.paused ? "resume" : "pause";
  if (state.subframe) {
    drawImageData(subframeCanvas, state.subframe, {
      gridOverlay: state.gridOverlay,
      showGrid: gridToggle.checked,
    });
    if (state.pendingClick) {
      const p = fieldToCanvas(
        state.pendingClick.x, state.pendingClick.y,
        subframeCanvas.width, subframeCanvas.height,
        state.fieldWidth, state.fieldHeight,
      );
      drawClickMarker(subframeCanvas, p.x, p.y);
    }
  }
  if (state.composite) {
    drawImageData(compositeCanvas, state.composite, {
      exposure: state.exposure,
      showExposure: exposureToggle.checked,
    });
  }
  if (state.blip) drawImageData(blipCanvas, state.blip);
  decisionLog.replaceChildren(
    ...state.decisions.slice(-12).reverse().map((d) => {
      const li = document.createElement("li");
      li.textContent = `t=${d.t.toFixed(2)}s  (${d.center[0]}, ${d.center[1]})  ${d.reason}`;
      return li;
    }),
  );
}

subframeCanvas.addEventListener("click", (ev) => {
  if (!state.fieldWidth) return;
  const rect = subframeCanvas.getBoundingClientRect();
  const p = canvasToField(
    ev.clientX - rect.left, ev.clientY - rect.top,
    rect.width, rect.height, state.fieldWidth, state.fieldHeight,
  );
  connection.send({ schema: 1, type: "click", x: p.x, y: p.y });
  update(latchClick(state, p.x, p.y));
});

modeSelect.addEventListener("change", () => {
  const mode = modeSelect.value as "motion" | "wavelet" | "manual";
  connection.send({ schema: 1, type: "mode", mode });
});

function sendTuning(): void {
  connection.send({
    schema: 1, type: "set",
    tau: Number(tauInput.value),
    lambda: Number(lambdaInput.value),
    p_jump: Number(pJumpInput.value),
  });
}
tauInput.addEventListener("change", sendTuning);
lambdaInput.addEventListener("change", sendTuning);
pJumpInput.addEventListener("change", sendTuning);

pauseButton.addEventListener("click", () => {
  connection.send({ schema: 1, type: state.paused ? "resume" : "pause" });
});

gridToggle.addEventListener("change", () => update(state));
exposureToggle.addEventListener("change", () => update(state));

connection.connect();
