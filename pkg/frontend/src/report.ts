// Live aggregation view: one bar group per metric, widths and labels
// taken verbatim from /api/report.

import { METRIC_LABELS, Metric, ReviewApi } from "./api.js";

const BUCKETS = ["high", "medium", "low", "unresolved"] as const;

export async function renderReport(root: HTMLElement, api: ReviewApi): Promise<void> {
  const report = await api.report();
  const groups = Object.entries(report.metrics)
    .map(([metric, data]) => {
      const bars = BUCKETS.map((bucket) => {
        const pct = data.percent[bucket] ?? 0;
        const count = data.counts[bucket] ?? 0;
        return `
          <div class="bar-row" data-metric="${metric}" data-bucket="${bucket}"
               data-percent="${pct}" data-count="${count}">
            <span class="bucket">${bucket}</span>
            <div class="bar"><div class="fill fill-${bucket}" style="width: ${pct}%"></div></div>
            <span class="value">${pct.toFixed(1)}% (${count})</span>
          </div>`;
      }).join("");
      const label = METRIC_LABELS[metric as Metric] ?? metric;
      return `
        <section class="metric-report" data-metric="${metric}">
          <h2>${label}</h2>
          <p class="voted">${data.voted_samples} of ${report.total_samples} samples voted</p>
          ${bars}
        </section>`;
    })
    .join("");
  root.innerHTML = `<div class="report">${groups}</div>`;
}
