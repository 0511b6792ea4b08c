// Shared test scaffolding: a scripted fetch standing in for the review
// API, with per-route failure injection to exercise retry paths.

import { vi } from "vitest";

import type { NextResponse, Report, SampleView } from "../src/api.js";

export interface RecordedPost {
  url: string;
  body: Record<string, unknown>;
}

export interface FakeServer {
  posts: RecordedPost[];
  failNextPosts: number;
  setNext(next: NextResponse): void;
  setReport(report: Report): void;
}

export function sampleFixture(overrides: Partial<SampleView> = {}): SampleView {
  return {
    sample_id: "sample-000",
    image_url: "/api/samples/sample-000/image",
    kind: "object_replacement",
    conversations: [
      { from: "human", value: "<image>\nWhat objects have changed in this area?" },
      { from: "gpt", value: "LEFT: red square; RIGHT: blue circle" },
    ],
    provenance: {
      caption_a: "red square",
      caption_b: "blue circle",
      difference_caption: "LEFT: red square; RIGHT: blue circle",
    },
    votes: {},
    ...overrides,
  };
}

export function installFakeServer(): FakeServer {
  let next: NextResponse = { done: false, remaining: 1, sample: sampleFixture() };
  let report: Report = { total_samples: 0, metrics: {} };
  const server: FakeServer = {
    posts: [],
    failNextPosts: 0,
    setNext(n) {
      next = n;
    },
    setReport(r) {
      report = r;
    },
  };

  const json = (body: unknown, status = 200) =>
    new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });

  globalThis.fetch = vi.fn(async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    if (init?.method === "POST" && url.includes("/api/votes")) {
      if (server.failNextPosts > 0) {
        server.failNextPosts -= 1;
        throw new TypeError("network down");
      }
      server.posts.push({ url, body: JSON.parse(String(init.body)) });
      return json({ accepted: true, replaced_previous: false });
    }
    if (url.includes("/api/samples/next")) {
      return json(next);
    }
    if (url.includes("/api/report")) {
      return json(report);
    }
    return json({ detail: `unrouted ${url}` }, 404);
  }) as typeof fetch;

  return server;
}
