/**
 * Client-side evolution stepper: polls the step endpoint at a fixed
 * interval until the curve stops moving, the user stops it, or a step
 * budget runs out.  The step call and the sleep are injected so tests
 * drive the loop with fakes and zero wall-clock time.
 *
 * Convergence mirrors the engine's own rule: stop when the Hausdorff
 * gap between successive curves drops below the threshold (0.5 px by
 * default, matching the service-side default).
 */

import type { StepResult } from "./api.js";

export type RunOutcome = "converged" | "stopped" | "max-steps";

export interface RunnerOptions {
  /** Delay between polls while auto-running (ms). */
  intervalMs?: number;
  /** A step with hausdorff_step below this counts as converged. */
  convergedBelow?: number;
  /** Upper bound on steps taken by one run() call. */
  maxSteps?: number;
}

const defaultSleep = (ms: number): Promise<void> =>
  new Promise((resolve) => setTimeout(resolve, ms));

export class EvolutionRunner {
  readonly history: StepResult[] = [];
  readonly intervalMs: number;
  readonly convergedBelow: number;
  readonly maxSteps: number;

  private stopRequested = false;
  private inFlight = false;

  constructor(
    private readonly step: () => Promise<StepResult>,
    private readonly sleep: (ms: number) => Promise<void> = defaultSleep,
    options: RunnerOptions = {},
  ) {
    this.intervalMs = options.intervalMs ?? 250;
    this.convergedBelow = options.convergedBelow ?? 0.5;
    this.maxSteps = options.maxSteps ?? 200;
  }

  /** True once the most recent step moved the curve less than the threshold. */
  get converged(): boolean {
    const last = this.history[this.history.length - 1];
    return last !== undefined && last.hausdorff_step < this.convergedBelow;
  }

  /** Energy series for the history sparkline. */
  energies(): number[] {
    return this.history.map((h) => h.energy);
  }

  /** Take one step; rejects if a step is already in flight. */
  async stepOnce(): Promise<StepResult> {
    if (this.inFlight) throw new Error("a step is already in flight");
    this.inFlight = true;
    try {
      const result = await this.step();
      this.history.push(result);
      return result;
    } finally {
      this.inFlight = false;
    }
  }

  /**
   * Step repeatedly (sleeping intervalMs between steps) until converged,
   * stopped via stop(), or maxSteps steps have been taken by this call.
   */
  async run(): Promise<RunOutcome> {
    this.stopRequested = false;
    for (let taken = 0; taken < this.maxSteps; taken++) {
      if (this.stopRequested) return "stopped";
      await this.stepOnce();
      if (this.converged) return "converged";
      if (this.stopRequested) return "stopped";
      await this.sleep(this.intervalMs);
    }
    return "max-steps";
  }

  /** Ask a running loop to stop after the current step. */
  stop(): void {
    this.stopRequested = true;
  }
}
