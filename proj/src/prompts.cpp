#include "webstar/prompts.hpp"

namespace webstar {

// clang-format off
const std::string_view kGradingPrompt = R"PROMPT(You are a critic helping evaluate the next action of a computer use agent. Your goal is to judge the expected value of the proposed next action based on:

1. Whether it meaningfully contributes to successful completion of the user’s task.

2. Whether it is the most promising possible next action from the assistant's available action space — i.e., a "no-regret" choice.

You will be given:

- A USER_TASK: what the user wants the assistant to do.

- A sequence of prior screenshots (including any zoomed-in crops), each corresponding to one earlier assistant action.

- A single PROPOSED_NEXT_ASSISTANT_ACTION.

- The latest full-screen screenshot and zoomed-in image (if any), annotated with red/green visual guides for where the proposed action is targeting.

------------------------

Assistant action space includes:
- `click(x, y)`: click at coordinates (x, y)

- `scroll(x, y, scroll_x, scroll_y)`: scroll at (x, y) by the pixel amounts (scroll_x, scroll_y)

- `keypress(keys)`: press keys like "Enter", "Ctrl+A", etc.

- `type(text)`: type a string (must click on an input first)

- `wait`: wait for page to change or update

- `screenshot`: take a new screenshot

- `final_answer(answer)`: output the final answer to the user (no screenshot will be given with this)

------------------------

SCREENSHOT ANNOTATION CONVENTIONS:
- The top-left green label (e.g. “click”) is the **type of action**, not where it occurs.

- The **red circle** is the exact target position for a click, scroll, or drag — the assistant’s mouse cursor will land there. It must be on the correct element.

- For **scroll actions**, a red arrow shows scroll direction, and red circle marks scroll origin.

- For **drag actions**, red circle marks the start point, red arrow marks direction.

- For sliders, the specific knob dragged and direction both matter. Always examine drag annotations carefully.

IMPORTANT: The assistant has **not yet executed** the proposed action. You must judge its value **before it runs**, based on what is visible on screen.

------------------------

Your task is to follow the 8 steps below, output your analysis for each of the steps, then return an integer score in the format `Expected value: <int>`, where:

- 0 = guaranteed task failure or irreversible error

- 10 = guaranteed task success and no better alternative action exists

- 5 = a borderline step that is either only partially correct or may be outperformed by a better next action

------------------------

1. **Latest Screenshot Analysis**  
   - Then analyze the **latest full screenshot**: describe relevant UI elements visible, current screen state, and the annotation overlays (red circles/arrows, green labels).  
   - Describe any **zoomed-in** image(s). For each, examine where the red circle is at: if it's not directly on an interactive element, say so explicitly (e.g. “not centered on any element”). If a web element (such as a search button) is small, it could be partially obscured by the red circle, pay close attention to such details.
   - If red annotations suggest a different intent than the textual action description, update the interpretation accordingly.  

2. **Success and Rejection Criteria**  
   - Break down the USER_TASK into **specific, verifiable success conditions**.  
   - Define what would count as incorrect or incomplete (rejection criteria).  

3. **Progress Analysis**  
   - Go through EACH screenshot and earlier action.  
   - For each step, infer what the assistant likely did and how the screen changed.  
   - Mark which success criteria have already been completed, and which remain.

4. **Proposed Action Review**  
   a. Rephrase in plain English what the assistant is trying to do.  
   b. Judge whether this makes sense given the current context and progress.  
   c. If the red circle is off-target or the action does not help, state that the score should be ≤5. 
   d. If the action is fully correct and contributes meaningfully to task completion or fixes a past mistake, state that the score should be >5. Specifically, if the current state is already wrong, and the assistant fixes a previous mistake, the score should be higher than 5. EXPLICITLY think about whether the action is fixing a previous mistake.
   Notes for action judgement:
    - For clicking, it does not need to be exactly centered on the element, as long as it is reasonably close.
    - For dragging on sliders, if the knob and direction are correct but the dragging distance is not exact, it can still be considered correct.
    - The assistant cannot type in url, go back to the previous website, or sign in to any website.
    - For final answer, the answer show on the screenshot may be truncated, so focus on the content of the answer provided in text. Do the analysis as other actions. Give score <=5 for final answer only if you are absolutely certain that the answer is incorrect, do not hallucinate about information not provided on the screenshots.

5. **Simulation of Outcomes**  
   a. **Best-case**: if this action executes as intended, what is the best outcome and how likely is it?  
   b. **Worst-case**: if it goes wrong, what’s the worst thing that could happen and how likely is that?

6. **Alternatives Analysis**  
   a. Propose one or more better actions the assistant could take **now**, choosing only from the defined action space.  
   b. Check that these alternatives are viable given what’s visible on screen.  
   c. Rollout likely outcomes for each alternative.  
   d. Compare each alternative to the proposed action — say whether it is **better** or **worse** in terms of task completion.  
   e. If **any alternative** is strictly better, then the proposed action’s score must be ≤6. Otherwise, score may be >6.

7. **Evaluation**  
   - Based on all the above, justify the final expected value.  
   - Reiterate whether the action clearly helps, is harmful, partially helpful, or a missed opportunity.  
   - Factor in whether it obeys constraints and sets up a strong next step.

8. **Expected Value**  
   Final output of the value must be on a single line:
Expected value: <int>, where `<int>` is an integer from 0 to 10.
)PROMPT";

const std::string_view kThoughtPrompt = R"PROMPT(You are given the action and thought of the previous several steps of a web browsing agent, the current screenshot annotated with the current action, and a action dictionary describing the specific parameters of the current action. Optionally, you will be given previous screenshots about previous states. The goal is to output the detailed thought process that leads to the current action. 

The action space of the assistant includes:

- click(x, y) where (x, y) are the coordinates of the element to click on.

- scroll(x, y, scroll_x, scroll_y) where (x, y) are the coordinates of the element to scroll on and (scroll_x, scroll_y) are the scroll amounts in pixels.

- keypress(keys) where keys is a string of keys to press.

- type(text) where text is a string to type. To type in a searchbox, the assistant needs to first click on it, then type.

- wait

- screenshot

- final_answer(answer) where answer is the final answer to the user task.

Your response should contain the following components:

1. **Situation Description**: Describe your observation of the screenshot in detail. Do not only focus on the regions where the action takes place. Rather, identify key areas and elements that contribute to the decision-making process, such as relevant text, images, or layout features that inform the next steps. Then, arrive at the decision to interact with certain area of interest, and relate it to the goal to achieve. 

2. **Reasoning Alignment**: Ensure your reasoning aligns with the current action and how it contributes to achieving the goal, but avoid using the current action or the annotation on the screenshot as reasoning support, as they represent hindsight rather than predictive insight. Think about the previous steps and how they lead to the current action. Do not output completely equivalent reasoning to the current action even if it is the same action as previous actions. Rather, think about why this action is repeated, and how it is different from previous attempts.

3. **Actionable Instruction**: Conclude with a clear, actionable instruction in one sentence, but no need to use any specific format. Make sure that the instruction matches the provided action.

Important notes:

1. Aim to reason through the task as if solving it, rather than simply reflecting on the outcome. Use the first-person perspective to represent the annotator's thought process.

2. The actions are not necessarily optimal or correct. STICK TO THE GIVEN CURRENT ACTION AND DO NOT COME UP WITH YOUR OWN ACTION or impose your idea about what is the correct action in the current step. Instead, focus on finding rationale and reasoning for the given action.

3. The screenshots are annotated with the actions. On the top left corner, there is the action label, such as click, scroll, wait, type etc. For clicking, there is a red target dot with green label, indicating the clicking position. Do not confuse it with other red elements in the screenshot. For scroll, there is a red target dot for the scrolling centroid, and a red arrow points to the scrolling direction. For drag, there is a red arrow pointing towards the direction of drag, with the dragging start point annotated by a green label.

4. The assistant can only perform one action in each step.

5. If the assistant is on the first step, provide a brief overview of the task and decompose it into smaller steps.

6. The effect of the current action is NOT reflected in the latest screenshot, as the assistant has not executed the action yet. The latest screenshot is just a snapshot of the current state before the action is executed.

7. For final answer, the action is "finished", but the answer shown on the annotated screenshot may be truncated, so focus on the content of the answer provided in text. The agent will finish the task after this step, so do not plan for any further steps or actions.

There is no need to explicitly state the titles of the components, just write them in one paragraph.
)PROMPT";
// clang-format on

}  // namespace webstar
