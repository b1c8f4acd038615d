// Full-session contract test against a LIVE survey service (uvicorn,
// spawned below): five question cycles driven through the real DOM
// components, real timers for the 10-second panorama stage, payloads
// accepted by server validation on first attempt, and stored click
// coordinates matching the DOM-scale oracle within 1 pixel.

import { spawn, ChildProcess } from "node:child_process";
import { readFileSync } from "node:fs";
import { resolve } from "node:path";
import { afterAll, beforeAll, describe, expect, it, vi } from "vitest";
import { SurveyApi } from "../../src/api.js";
import { SurveySession } from "../../src/session.js";

let server: ChildProcess;
let baseUrl = "";
let storePath = "";

async function waitForServer(url: string, attempts = 100): Promise<void> {
  for (let i = 0; i < attempts; i++) {
    try {
      const res = await fetch(`${url}/api/stats/choices`);
      if (res.ok) return;
    } catch {
      /* not up yet */
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error(`server at ${url} never became ready`);
}

beforeAll(async () => {
  const script = resolve(process.cwd(), "tests/contract/serve_fixture.py");
  server = spawn("python3", [script], { stdio: ["ignore", "pipe", "pipe"] });
  let errBuffer = "";
  server.stderr!.on("data", (chunk: Buffer) => { errBuffer += chunk.toString(); });
  const port = await new Promise<number>((resolve, reject) => {
    let buffer = "";
    server.stdout!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
      const storeMatch = buffer.match(/STORE (\S+)/);
      if (storeMatch) storePath = storeMatch[1]!;
      const portMatch = buffer.match(/PORT (\d+)/);
      if (portMatch) resolve(parseInt(portMatch[1]!, 10));
    });
    server.on("exit", (code) =>
      reject(new Error(`fixture (${script}) exited ${code}: ${errBuffer}`)));
    setTimeout(() => reject(new Error(`fixture startup timed out: ${errBuffer}`)), 60_000);
  });
  baseUrl = `http://127.0.0.1:${port}`;
  await waitForServer(baseUrl);
}, 90_000);

afterAll(() => {
  server?.kill();
});

/** Stage-driver: reacts to session stage changes like a participant would. */
function autopilot(container: HTMLElement, clickPlan: Array<[number, number]>,
                   sentClicks: Array<{ x: number; y: number }>) {
  const DISPLAY = { left: 40, top: 80, width: 480, height: 480 };
  const NATIVE = 32;
  return (stage: string) => {
    // let the stage finish rendering, then act
    setTimeout(() => {
      if (stage === "choice") {
        const cards = container.querySelectorAll<HTMLImageElement>(".choice-card");
        expect(cards.length).toBe(3);
        const pick = cards[Math.floor(Math.random() * 3)]!;
        // submission must be blocked before any choice: button disabled
        const btn = container.querySelector<HTMLButtonElement>("button")!;
        expect(btn.disabled).toBe(true);
        pick.dispatchEvent(new MouseEvent("click", { bubbles: true }));
        expect(btn.disabled).toBe(false);
        btn.click();
      } else if (stage === "annotate") {
        const img = container.querySelector<HTMLImageElement>(".annotate-image")!;
        vi.spyOn(img, "getBoundingClientRect").mockReturnValue({
          ...DISPLAY, right: DISPLAY.left + DISPLAY.width,
          bottom: DISPLAY.top + DISPLAY.height, x: DISPLAY.left, y: DISPLAY.top,
          toJSON() {},
        } as DOMRect);
        const submit = [...container.querySelectorAll("button")]
          .find((b) => b.textContent === "Submit")!;
        expect(submit.disabled).toBe(true);
        for (const [dx, dy] of clickPlan) {
          img.dispatchEvent(new MouseEvent("click", {
            clientX: DISPLAY.left + dx, clientY: DISPLAY.top + dy, bubbles: true,
          }));
          sentClicks.push({
            x: (dx * NATIVE) / DISPLAY.width,
            y: (dy * NATIVE) / DISPLAY.height,
          });
        }
        expect(submit.disabled).toBe(true); // properties still missing
        const selects = container.querySelectorAll<HTMLSelectElement>("select");
        expect(selects.length).toBe(3);
        const props = ["object", "material", "texture"];
        selects.forEach((sel, i) => {
          sel.value = props[i]!;
          sel.dispatchEvent(new Event("change", { bubbles: true }));
        });
        expect(submit.disabled).toBe(false);
        submit.click();
      }
    }, 10);
  };
}

describe("five-question live session", () => {
  it("completes the protocol with valid payloads and exact coordinates", async () => {
    const container = document.createElement("div");
    document.body.appendChild(container);

    const api = new SurveyApi(baseUrl);
    const panDurations: number[] = [];
    const submissions: string[] = [];
    const sentClicks: Array<{ x: number; y: number }> = [];
    const clickPlan: Array<[number, number]> = [[60, 90], [240, 240], [450, 30]];

    const session = new SurveySession(api, `ui-test-${Date.now()}`, container, {
      onStage: autopilot(container, clickPlan, sentClicks),
      onPanoramaComplete: (ms) => panDurations.push(ms),
      onSubmitted: (status) => submissions.push(status),
    });

    const completed = await session.run();

    // five questionnaires per participant, then the completion screen
    expect(completed).toBe(5);
    expect(container.textContent).toContain("All done");

    // panorama stage: 10.0 s +/- 0.2 s, every cycle
    expect(panDurations).toHaveLength(5);
    for (const ms of panDurations) {
      expect(ms).toBeGreaterThanOrEqual(10_000);
      expect(ms).toBeLessThanOrEqual(10_200);
    }

    // every payload passed server validation on first attempt
    expect(submissions).toEqual(["stored", "stored", "stored", "stored", "stored"]);
    expect(api.pendingCount).toBe(0);

    // stored coordinates match the DOM-scale oracle within 1 px
    const records = readFileSync(storePath, "utf-8").trim().split("\n")
      .map((line) => JSON.parse(line));
    expect(records).toHaveLength(5);
    const storedClicks = records.flatMap((r) => r.response.clicks);
    expect(storedClicks).toHaveLength(15);
    storedClicks.forEach((click: { x: number; y: number }, i: number) => {
      const oracle = sentClicks[i]!;
      expect(Math.abs(click.x - oracle.x)).toBeLessThan(1);
      expect(Math.abs(click.y - oracle.y)).toBeLessThan(1);
    });

    // server-side aggregation sees exactly this session
    const stats = await (await fetch(`${baseUrl}/api/stats/choices`)).json();
    expect(stats.total).toBe(5);

    // role confidentiality: no payload ever exposed roles
    const q = await api.nextQuestion("fresh-observer");
    expect(JSON.stringify(q)).not.toMatch(/image_a_1|image_b|image_c|segment/);
  }, 110_000);
});
