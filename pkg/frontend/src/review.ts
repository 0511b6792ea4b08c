// Review flow: show the next pending sample with its image and texts,
// collect one high/medium/low selection per metric (keys 1/2/3 score the
// highlighted metric and move on), submit, advance.

import {
  METRIC_LABELS,
  METRICS,
  Metric,
  ReviewApi,
  SCORES,
  Score,
} from "./api.js";
import { ReviewCard, VoteSession } from "./state.js";

export class ReviewView {
  card: ReviewCard | null = null;
  activeMetric = 0;

  constructor(
    private root: HTMLElement,
    private api: ReviewApi,
    readonly session: VoteSession,
  ) {}

  async load(): Promise<void> {
    const next = await this.api.nextSample(this.session.annotator);
    if (next.done || next.sample === null) {
      this.card = null;
      this.root.innerHTML = `<p class="done">All samples reviewed. Thank you!</p>`;
      return;
    }
    this.card = new ReviewCard(next.sample);
    this.activeMetric = 0;
    this.render(next.remaining);
  }

  render(remaining: number): void {
    if (!this.card) return;
    const s = this.card.sample;
    const prov = s.provenance as Record<string, string>;
    const texts: string[] = [];
    if (prov.caption_a) texts.push(`<dt>left region</dt><dd>${escapeHtml(prov.caption_a)}</dd>`);
    if (prov.caption_b) texts.push(`<dt>right region</dt><dd>${escapeHtml(prov.caption_b)}</dd>`);
    if (prov.difference_caption)
      texts.push(`<dt>difference</dt><dd>${escapeHtml(prov.difference_caption)}</dd>`);
    if (prov.description)
      texts.push(`<dt>object</dt><dd>${escapeHtml(prov.description)}</dd>`);
    const conversation = s.conversations
      .map((t) => `<p class="turn turn-${t.from}"><b>${t.from}:</b> ${escapeHtml(t.value)}</p>`)
      .join("");

    this.root.innerHTML = `
      <div class="review-card" data-sample-id="${s.sample_id}">
        <header><span class="sample-id">${s.sample_id}</span>
          <span class="remaining">${remaining} left</span></header>
        <img class="pair-image" src="${this.api.imageUrl(s)}" alt="concatenated image pair">
        <dl class="provenance">${texts.join("")}</dl>
        <div class="conversation">${conversation}</div>
        <div class="metrics">${METRICS.map((m, i) => this.metricRow(m, i)).join("")}</div>
        <div class="banner" hidden></div>
        <button class="submit" disabled>Submit (Enter)</button>
      </div>`;

    for (const row of this.root.querySelectorAll<HTMLElement>(".metric-row")) {
      const metric = row.dataset.metric as Metric;
      for (const btn of row.querySelectorAll<HTMLButtonElement>("button.score")) {
        btn.addEventListener("click", () => {
          this.select(metric, btn.dataset.score as Score);
        });
      }
    }
    this.root.querySelector<HTMLButtonElement>("button.submit")!.addEventListener("click", () => {
      void this.submit();
    });
    this.syncSelections();
  }

  private metricRow(metric: Metric, index: number): string {
    const buttons = SCORES.map(
      (score, k) =>
        `<button class="score" data-score="${score}">${score} (${k + 1})</button>`,
    ).join("");
    return `
      <div class="metric-row ${index === 0 ? "active" : ""}" data-metric="${metric}">
        <span class="metric-name">${METRIC_LABELS[metric]}</span>${buttons}
      </div>`;
  }

  select(metric: Metric, score: Score): void {
    if (!this.card) return;
    this.session.select(this.card, metric, score);
    const idx = METRICS.indexOf(metric);
    if (idx === this.activeMetric && this.activeMetric < METRICS.length - 1) {
      this.activeMetric += 1;
    }
    this.syncSelections();
  }

  /** Keyboard shortcuts: 1/2/3 pick high/medium/low for the active
   * metric; Enter submits once all three are set. */
  handleKey(key: string): void {
    if (!this.card) return;
    const k = Number.parseInt(key, 10);
    if (k >= 1 && k <= SCORES.length) {
      this.select(METRICS[this.activeMetric], SCORES[k - 1]);
      return;
    }
    if (key === "Enter" && this.card.complete) {
      void this.submit();
    }
  }

  syncSelections(): void {
    if (!this.card) return;
    for (const row of this.root.querySelectorAll<HTMLElement>(".metric-row")) {
      const metric = row.dataset.metric as Metric;
      row.classList.toggle("active", METRICS.indexOf(metric) === this.activeMetric);
      for (const btn of row.querySelectorAll<HTMLButtonElement>("button.score")) {
        btn.classList.toggle("selected", this.card.selections[metric] === btn.dataset.score);
      }
    }
    const submit = this.root.querySelector<HTMLButtonElement>("button.submit");
    if (submit) submit.disabled = !this.card.complete;
  }

  async submit(): Promise<void> {
    if (!this.card || !this.card.complete) return;
    const outcome = await this.session.submit(this.card);
    if (!outcome.ok) {
      this.showRetryBanner(outcome.failed);
      return;
    }
    await this.load();
  }

  async retry(): Promise<void> {
    const outcome = await this.session.retry();
    if (!outcome.ok) {
      this.showRetryBanner(outcome.failed);
      return;
    }
    this.hideBanner();
    await this.load();
  }

  private showRetryBanner(failed: number): void {
    const banner = this.root.querySelector<HTMLElement>(".banner");
    if (!banner) return;
    banner.hidden = false;
    banner.innerHTML = `network trouble: ${failed} vote(s) not sent yet. <button class="retry">Retry</button>`;
    banner.querySelector<HTMLButtonElement>("button.retry")!.addEventListener("click", () => {
      void this.retry();
    });
  }

  private hideBanner(): void {
    const banner = this.root.querySelector<HTMLElement>(".banner");
    if (banner) banner.hidden = true;
  }
}

function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}
