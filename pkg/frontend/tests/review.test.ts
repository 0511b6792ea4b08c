import { beforeEach, describe, expect, it } from "vitest";

import { ReviewApi } from "../src/api.js";
import { ReviewView } from "../src/review.js";
import { VoteSession } from "../src/state.js";
import { installFakeServer, sampleFixture } from "./helpers.js";

function mount() {
  document.body.innerHTML = `<div id="app"></div>`;
  return document.getElementById("app") as HTMLElement;
}

function makeView(root: HTMLElement) {
  const api = new ReviewApi("");
  const session = new VoteSession(api, "alice");
  return new ReviewView(root, api, session);
}

function clickScore(root: HTMLElement, metric: string, score: string) {
  const row = root.querySelector(`.metric-row[data-metric="${metric}"]`)!;
  (row.querySelector(`button.score[data-score="${score}"]`) as HTMLButtonElement).click();
}

describe("review flow", () => {
  let server: ReturnType<typeof installFakeServer>;
  let root: HTMLElement;
  let view: ReviewView;

  beforeEach(async () => {
    server = installFakeServer();
    root = mount();
    view = makeView(root);
    await view.load();
  });

  it("renders the sample image and provenance texts", () => {
    const img = root.querySelector<HTMLImageElement>("img.pair-image");
    expect(img?.getAttribute("src")).toBe("/api/samples/sample-000/image");
    expect(root.textContent).toContain("red square");
    expect(root.textContent).toContain("blue circle");
  });

  it("posts exactly one vote per user selection on submit", async () => {
    clickScore(root, "bbox_difference", "high");
    clickScore(root, "content_caption_accuracy", "high");
    clickScore(root, "difference_caption_accuracy", "medium");
    await view.submit();

    expect(server.posts).toHaveLength(3);
    const byMetric = Object.fromEntries(server.posts.map((p) => [p.body.metric, p.body]));
    expect(byMetric.bbox_difference).toMatchObject({
      sample_id: "sample-000",
      annotator_id: "alice",
      score: "high",
    });
    expect(byMetric.content_caption_accuracy.score).toBe("high");
    expect(byMetric.difference_caption_accuracy.score).toBe("medium");

    // every POST traces back to an explicit select event
    for (const post of server.posts) {
      const matching = view.session.events.filter(
        (e) =>
          e.type === "select" &&
          e.sampleId === post.body.sample_id &&
          e.metric === post.body.metric &&
          e.score === post.body.score,
      );
      expect(matching.length).toBeGreaterThan(0);
    }
  });

  it("never posts without user action", async () => {
    // rendering, re-rendering, and loading make no vote requests
    view.syncSelections();
    expect(server.posts).toHaveLength(0);
    expect(view.session.events).toHaveLength(0);
  });

  it("keeps submit disabled until all three metrics are selected", () => {
    const submit = () => root.querySelector<HTMLButtonElement>("button.submit")!;
    expect(submit().disabled).toBe(true);
    clickScore(root, "bbox_difference", "high");
    expect(submit().disabled).toBe(true);
    clickScore(root, "content_caption_accuracy", "low");
    expect(submit().disabled).toBe(true);
    clickScore(root, "difference_caption_accuracy", "medium");
    expect(submit().disabled).toBe(false);
  });

  it("maps keys 1/2/3 to high/medium/low on the active metric", () => {
    view.handleKey("1");
    view.handleKey("3");
    view.handleKey("2");
    expect(view.card?.selections).toEqual({
      bbox_difference: "high",
      content_caption_accuracy: "low",
      difference_caption_accuracy: "medium",
    });
  });

  it("prefills prior selections returned by the server", async () => {
    server.setNext({
      done: false,
      remaining: 2,
      sample: sampleFixture({
        votes: { bbox_difference: "medium", content_caption_accuracy: "high" },
      }),
    });
    await view.load();
    const selected = [...root.querySelectorAll("button.score.selected")].map((b) => [
      b.closest(".metric-row")?.getAttribute("data-metric"),
      b.getAttribute("data-score"),
    ]);
    expect(selected).toEqual([
      ["bbox_difference", "medium"],
      ["content_caption_accuracy", "high"],
    ]);
    expect(root.querySelector<HTMLButtonElement>("button.submit")?.disabled).toBe(true);
  });

  it("advances to the next sample after a successful submit", async () => {
    clickScore(root, "bbox_difference", "high");
    clickScore(root, "content_caption_accuracy", "high");
    clickScore(root, "difference_caption_accuracy", "high");
    server.setNext({ done: true, remaining: 0, sample: null });
    await view.submit();
    expect(root.textContent).toContain("All samples reviewed");
  });

  it("shows a retry banner on network failure and loses no votes", async () => {
    clickScore(root, "bbox_difference", "high");
    clickScore(root, "content_caption_accuracy", "high");
    clickScore(root, "difference_caption_accuracy", "medium");

    server.failNextPosts = 1; // first of the three posts dies
    await view.submit();
    expect(server.posts).toHaveLength(2);
    expect(view.session.pending).toHaveLength(1);
    const banner = root.querySelector<HTMLElement>(".banner");
    expect(banner?.hidden).toBe(false);
    expect(banner?.textContent).toContain("1 vote(s) not sent");

    server.setNext({ done: true, remaining: 0, sample: null });
    await view.retry();
    expect(view.session.pending).toHaveLength(0);
    expect(server.posts).toHaveLength(3);
    const metrics = server.posts.map((p) => p.body.metric).sort();
    expect(metrics).toEqual([
      "bbox_difference",
      "content_caption_accuracy",
      "difference_caption_accuracy",
    ]);
  });
});
