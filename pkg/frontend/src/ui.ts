/* DOM layer: side-by-side pair display, score slider, keyboard shortcuts.
 *
 * Blind-rating rules: the rater sees a progress counter and two images,
 * never stimulus ids, filenames or distortion labels. Images display at
 * native resolution or an integer downscale so distortion detail is not
 * smeared by fractional browser resampling.
 */

import { Stimulus } from "./api.js";

export interface RatingPanel {
  present(stimulus: Stimulus, imageUrl: (p: string) => string): Promise<number>;
  showCompletion(exportUrl: string, submitted: number): void;
  notify(message: string): void;
}

export function integerFitScale(
  naturalW: number,
  naturalH: number,
  maxW: number,
  maxH: number,
): number {
  // smallest integer divisor k such that the image fits; 1 keeps native size
  let k = 1;
  while ((naturalW / k > maxW || naturalH / k > maxH) && k < 16) k += 1;
  return k;
}

export class SliderState {
  value = 50;
  touched = false;

  set(value: number): void {
    this.value = Math.max(0, Math.min(100, Math.round(value)));
    this.touched = true;
  }

  adjust(delta: number): void {
    this.set(this.value + delta);
  }

  get submitEnabled(): boolean {
    return this.touched;
  }

  reset(): void {
    this.value = 50;
    this.touched = false;
  }
}

export function buildPanel(root: HTMLElement): RatingPanel {
  root.innerHTML = `
    <header>
      <h1>Quality rating</h1>
      <div class="progress"><span id="progress-text"></span>
        <progress id="progress-bar" max="1" value="0"></progress></div>
    </header>
    <main id="pair" hidden>
      <figure>
        <img id="img-ref" alt="reference rendering" />
        <figcaption>reference</figcaption>
      </figure>
      <figure>
        <img id="img-dist" alt="rendering under test" />
        <figcaption>processed</figcaption>
      </figure>
    </main>
    <section id="controls" hidden>
      <label for="score">How close is the processed rendering to the reference?
        <b>bad</b> 0 &ndash; 100 <b>perfect</b></label>
      <input type="range" id="score" min="0" max="100" step="1" value="50" />
      <output id="score-value">&ndash;</output>
      <button id="submit" disabled>Submit (Enter)</button>
      <p class="hint">arrow keys adjust the score, Enter submits</p>
    </section>
    <section id="done" hidden>
      <h2>Session complete</h2>
      <p id="done-text"></p>
      <a id="export-link" download="ratings.csv">Download your ratings (CSV)</a>
    </section>
    <div id="notify" class="notify"></div>
  `;

  const el = <T extends HTMLElement>(id: string): T =>
    root.querySelector<T>(`#${id}`)!;
  const pair = el<HTMLElement>("pair");
  const controls = el<HTMLElement>("controls");
  const slider = el<HTMLInputElement>("score");
  const scoreValue = el<HTMLOutputElement>("score-value");
  const submit = el<HTMLButtonElement>("submit");
  const state = new SliderState();

  function paint(): void {
    slider.value = String(state.value);
    scoreValue.textContent = state.touched ? String(state.value) : "–";
    submit.disabled = !state.submitEnabled;
  }

  function sizeToIntegerScale(img: HTMLImageElement): void {
    const k = integerFitScale(
      img.naturalWidth,
      img.naturalHeight,
      Math.floor(root.clientWidth / 2) - 32 || 480,
      Math.floor(window.innerHeight * 0.7) || 640,
    );
    img.width = Math.floor(img.naturalWidth / k);
    img.height = Math.floor(img.naturalHeight / k);
  }

  return {
    present(stimulus: Stimulus, imageUrl: (p: string) => string): Promise<number> {
      pair.hidden = false;
      controls.hidden = false;
      const refImg = el<HTMLImageElement>("img-ref");
      const distImg = el<HTMLImageElement>("img-dist");
      for (const [img, url] of [
        [refImg, stimulus.reference_image_url],
        [distImg, stimulus.distorted_image_url],
      ] as const) {
        img.onload = () => sizeToIntegerScale(img);
        img.src = imageUrl(url);
      }
      el<HTMLElement>("progress-text").textContent =
        `item ${stimulus.progress.done + 1} of ${stimulus.progress.total}`;
      el<HTMLProgressElement>("progress-bar").value =
        stimulus.progress.done / stimulus.progress.total;

      state.reset();
      paint();

      return new Promise<number>((resolve) => {
        const finish = (): void => {
          if (!state.submitEnabled) return;
          slider.oninput = null;
          submit.onclick = null;
          document.onkeydown = null;
          resolve(state.value);
        };
        slider.oninput = () => {
          state.set(Number(slider.value));
          paint();
        };
        submit.onclick = finish;
        document.onkeydown = (ev: KeyboardEvent) => {
          if (ev.key === "ArrowLeft" || ev.key === "ArrowDown") {
            state.adjust(-1);
            paint();
            ev.preventDefault();
          } else if (ev.key === "ArrowRight" || ev.key === "ArrowUp") {
            state.adjust(+1);
            paint();
            ev.preventDefault();
          } else if (ev.key === "Enter") {
            finish();
            ev.preventDefault();
          }
        };
      });
    },

    showCompletion(exportUrl: string, submitted: number): void {
      pair.hidden = true;
      controls.hidden = true;
      const done = el<HTMLElement>("done");
      done.hidden = false;
      el<HTMLElement>("done-text").textContent =
        `${submitted} ratings recorded. Thank you!`;
      el<HTMLAnchorElement>("export-link").href = exportUrl;
    },

    notify(message: string): void {
      const box = el<HTMLElement>("notify");
      box.textContent = message;
      box.classList.add("visible");
      setTimeout(() => box.classList.remove("visible"), 4000);
    },
  };
}
