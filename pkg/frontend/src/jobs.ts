import type { DocforgeClient } from "./api";
import type { JobRow } from "./types";

export class JobFailedError extends Error {
  job: JobRow;

  constructor(job: JobRow) {
    super(job.error ?? `job ${job.id} failed`);
    this.name = "JobFailedError";
    this.job = job;
  }
}

const sleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export interface PollOptions {
  intervalMs?: number;
  timeoutMs?: number;
  onProgress?: (job: JobRow) => void;
}

/** Poll until the job reaches Done; Failed rejects with JobFailedError. */
export async function pollJob(
  client: DocforgeClient,
  jobId: string,
  opts: PollOptions = {},
): Promise<JobRow> {
  const interval = opts.intervalMs ?? 500;
  const deadline =
    opts.timeoutMs === undefined ? null : Date.now() + opts.timeoutMs;
  for (;;) {
    const job = await client.getJob(jobId);
    opts.onProgress?.(job);
    if (job.status === "Done") return job;
    if (job.status === "Failed") throw new JobFailedError(job);
    if (deadline !== null && Date.now() >= deadline) {
      throw new Error(`timed out waiting for job ${jobId}`);
    }
    await sleep(interval);
  }
}

export function progressLabel(job: JobRow): string {
  const { done, total } = job.progress;
  const frac = total > 0 ? ` ${done}/${total}` : "";
  return `${job.kind}: ${job.status}${frac}`;
}
