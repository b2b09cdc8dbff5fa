// Survey rendering driven entirely by the verified spec's schema; nothing
// renders that the board did not sign.

import { Answers, StudySpec, SurveyItem } from "./protocol.js";

export function renderSurvey(spec: StudySpec, container: HTMLElement): void {
  container.replaceChildren();
  for (const item of spec.survey) {
    const field = document.createElement("fieldset");
    field.dataset.itemId = item.id;
    const legend = document.createElement("legend");
    legend.textContent = item.prompt;
    field.appendChild(legend);

    if (item.kind === "choice") {
      for (const option of item.options) {
        const label = document.createElement("label");
        const input = document.createElement("input");
        input.type = "radio";
        input.name = item.id;
        input.value = option;
        label.append(input, ` ${option}`);
        field.appendChild(label);
      }
    } else if (item.kind === "integer") {
      const input = document.createElement("input");
      input.type = "number";
      input.name = item.id;
      input.min = String(item.min);
      input.max = String(item.max);
      input.step = "1";
      field.appendChild(input);
    } else {
      const input = document.createElement("textarea");
      input.name = item.id;
      input.rows = 2;
      field.appendChild(input);
    }
    container.appendChild(field);
  }
}

export interface Draft {
  answers: Answers;
  missing: string[];
  invalid: string[];
}

function readItem(item: SurveyItem, root: HTMLElement): number | string | null {
  if (item.kind === "choice") {
    const checked = root.querySelector<HTMLInputElement>(`input[name="${item.id}"]:checked`);
    return checked ? checked.value : null;
  }
  const input = root.querySelector<HTMLInputElement | HTMLTextAreaElement>(
    `[name="${item.id}"]`,
  );
  if (!input || input.value === "") return null;
  if (item.kind === "integer") {
    const value = Number(input.value);
    return Number.isSafeInteger(value) ? value : Number.NaN;
  }
  return input.value;
}

export function collectAnswers(spec: StudySpec, root: HTMLElement): Draft {
  const answers: Answers = {};
  const missing: string[] = [];
  const invalid: string[] = [];
  for (const item of spec.survey) {
    const value = readItem(item, root);
    if (value === null) {
      missing.push(item.id);
      continue;
    }
    if (item.kind === "integer") {
      const n = value as number;
      if (Number.isNaN(n) || n < (item.min ?? -Infinity) || n > (item.max ?? Infinity)) {
        invalid.push(item.id);
        continue;
      }
    }
    answers[item.id] = value;
  }
  return { answers, missing, invalid };
}

export function submissionEnabled(draft: Draft): boolean {
  return draft.missing.length === 0 && draft.invalid.length === 0;
}
