// Typed client for the review API. Shapes mirror the server's published
// review_api schema file.

export const METRICS = [
  "bbox_difference",
  "content_caption_accuracy",
  "difference_caption_accuracy",
] as const;
export type Metric = (typeof METRICS)[number];

export const SCORES = ["high", "medium", "low"] as const;
export type Score = (typeof SCORES)[number];

export const METRIC_LABELS: Record<Metric, string> = {
  bbox_difference: "Bounding Box Difference",
  content_caption_accuracy: "Content Caption Accuracy",
  difference_caption_accuracy: "Difference Caption Accuracy",
};

export interface ConversationTurn {
  from: string;
  value: string;
}

export interface SampleView {
  sample_id: string;
  image_url: string;
  kind: string;
  conversations: ConversationTurn[];
  provenance: Record<string, unknown>;
  votes: Partial<Record<Metric, Score>>;
}

export interface NextResponse {
  done: boolean;
  remaining: number;
  sample: SampleView | null;
}

export interface Vote {
  sample_id: string;
  annotator_id: string;
  metric: Metric;
  score: Score;
}

export interface MetricReport {
  voted_samples: number;
  counts: Record<string, number>;
  percent: Record<string, number>;
}

export interface Report {
  total_samples: number;
  metrics: Record<string, MetricReport>;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

async function asJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = (await resp.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      // leave statusText
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export class ReviewApi {
  constructor(readonly baseUrl: string = "") {}

  imageUrl(sample: SampleView): string {
    return this.baseUrl + sample.image_url;
  }

  async nextSample(annotator: string): Promise<NextResponse> {
    const resp = await fetch(
      `${this.baseUrl}/api/samples/next?annotator=${encodeURIComponent(annotator)}`,
    );
    return asJson<NextResponse>(resp);
  }

  async getSample(sampleId: string, annotator: string): Promise<SampleView> {
    const resp = await fetch(
      `${this.baseUrl}/api/samples/${encodeURIComponent(sampleId)}?annotator=${encodeURIComponent(annotator)}`,
    );
    return asJson<SampleView>(resp);
  }

  async postVote(vote: Vote): Promise<void> {
    const resp = await fetch(`${this.baseUrl}/api/votes`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(vote),
    });
    await asJson<unknown>(resp);
  }

  async report(): Promise<Report> {
    const resp = await fetch(`${this.baseUrl}/api/report`);
    return asJson<Report>(resp);
  }
}
