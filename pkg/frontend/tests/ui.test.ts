// @vitest-environment jsdom
import { describe, expect, it } from "vitest";

import { Stimulus } from "../src/api.js";
import { SliderState, buildPanel, integerFitScale } from "../src/ui.js";

const stimulus: Stimulus = {
  stimulus_id: "secret__GN_4",
  reference_image_url: "/img/aaaa",
  distorted_image_url: "/img/bbbb",
  progress: { done: 2, total: 10 },
};

describe("SliderState", () => {
  it("enables submit only after being touched", () => {
    const s = new SliderState();
    expect(s.submitEnabled).toBe(false);
    s.set(60);
    expect(s.submitEnabled).toBe(true);
    s.reset();
    expect(s.submitEnabled).toBe(false);
  });

  it("clamps and rounds to the 0-100 integer scale", () => {
    const s = new SliderState();
    s.set(150);
    expect(s.value).toBe(100);
    s.set(-3);
    expect(s.value).toBe(0);
    s.set(49.6);
    expect(s.value).toBe(50);
    s.adjust(-1);
    expect(s.value).toBe(49);
  });
});

describe("integerFitScale", () => {
  it("keeps native size when it fits", () => {
    expect(integerFitScale(270, 480, 500, 700)).toBe(1);
  });
  it("downscales by whole factors only", () => {
    expect(integerFitScale(1080, 1920, 500, 700)).toBe(3);
    expect(integerFitScale(800, 800, 399, 800)).toBe(3);
  });
});

describe("buildPanel", () => {
  it("gates submission on slider interaction and hides stimulus identity", async () => {
    const root = document.createElement("div");
    document.body.appendChild(root);
    const panel = buildPanel(root);

    const scorePromise = panel.present(stimulus, (p) => p);
    const submit = root.querySelector<HTMLButtonElement>("#submit")!;
    const slider = root.querySelector<HTMLInputElement>("#score")!;

    expect(submit.disabled).toBe(true);
    // Enter before touching the slider must not resolve
    document.dispatchEvent(new KeyboardEvent("keydown", { key: "Enter" }));

    slider.value = "72";
    slider.dispatchEvent(new Event("input"));
    expect(submit.disabled).toBe(false);

    // the rater never sees the stimulus id or distortion tag
    expect(root.innerHTML).not.toContain("secret");
    expect(root.innerHTML).not.toContain("GN_4");
    expect(root.textContent).toContain("item 3 of 10");

    document.dispatchEvent(new KeyboardEvent("keydown", { key: "Enter" }));
    await expect(scorePromise).resolves.toBe(72);
  });

  it("adjusts the score with arrow keys", async () => {
    const root = document.createElement("div");
    document.body.appendChild(root);
    const panel = buildPanel(root);

    const scorePromise = panel.present(stimulus, (p) => p);
    document.dispatchEvent(new KeyboardEvent("keydown", { key: "ArrowUp" }));
    document.dispatchEvent(new KeyboardEvent("keydown", { key: "ArrowUp" }));
    document.dispatchEvent(new KeyboardEvent("keydown", { key: "ArrowLeft" }));
    document.dispatchEvent(new KeyboardEvent("keydown", { key: "Enter" }));
    // arrows touched the slider, so Enter submits 50 + 1 + 1 - 1
    await expect(scorePromise).resolves.toBe(51);
  });

  it("shows the export link on completion", () => {
    const root = document.createElement("div");
    document.body.appendChild(root);
    const panel = buildPanel(root);
    panel.showCompletion("/api/session/x/export", 10);
    const link = root.querySelector<HTMLAnchorElement>("#export-link")!;
    expect(link.getAttribute("href")).toBe("/api/session/x/export");
    expect(root.textContent).toContain("10 ratings recorded");
  });
});
