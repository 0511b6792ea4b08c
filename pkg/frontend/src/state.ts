// Client-side view model and vote session.
//
// Every outgoing vote must trace back to an explicit user action, so the
// session keeps an event log that the component tests assert against.
// Votes that fail to send stay in the pending queue until a retry
// succeeds; nothing is dropped and nothing is fabricated.

import { METRICS, Metric, ReviewApi, SampleView, Score, Vote } from "./api.js";

export class ReviewCard {
  selections: Partial<Record<Metric, Score>>;

  constructor(readonly sample: SampleView) {
    // prefill from the annotator's existing votes on the server
    this.selections = { ...sample.votes };
  }

  select(metric: Metric, score: Score): void {
    this.selections[metric] = score;
  }

  get complete(): boolean {
    return METRICS.every((m) => this.selections[m] !== undefined);
  }
}

export type UserEvent =
  | { type: "select"; sampleId: string; metric: Metric; score: Score }
  | { type: "submit"; sampleId: string }
  | { type: "retry" };

export interface SubmitOutcome {
  ok: boolean;
  failed: number;
}

export class VoteSession {
  readonly events: UserEvent[] = [];
  readonly pending: Vote[] = [];
  readonly posted: Vote[] = [];

  constructor(
    private api: ReviewApi,
    readonly annotator: string,
  ) {}

  select(card: ReviewCard, metric: Metric, score: Score): void {
    this.events.push({ type: "select", sampleId: card.sample.sample_id, metric, score });
    card.select(metric, score);
  }

  /** Queue one vote per metric and try to send them all. */
  async submit(card: ReviewCard): Promise<SubmitOutcome> {
    if (!card.complete) {
      throw new Error("submit requires a selection for all three metrics");
    }
    this.events.push({ type: "submit", sampleId: card.sample.sample_id });
    for (const metric of METRICS) {
      this.pending.push({
        sample_id: card.sample.sample_id,
        annotator_id: this.annotator,
        metric,
        score: card.selections[metric] as Score,
      });
    }
    return this.flush();
  }

  /** Re-send everything still pending (explicit user retry). */
  async retry(): Promise<SubmitOutcome> {
    this.events.push({ type: "retry" });
    return this.flush();
  }

  private async flush(): Promise<SubmitOutcome> {
    const queue = this.pending.splice(0);
    const stillPending: Vote[] = [];
    for (const vote of queue) {
      try {
        await this.api.postVote(vote);
        this.posted.push(vote);
      } catch {
        stillPending.push(vote);
      }
    }
    this.pending.push(...stillPending);
    return { ok: stillPending.length === 0, failed: stillPending.length };
  }
}
